import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from spectralclt.hermite import (
    Case,
    expansion_from_coeffs,
    classify_case,
    gauss_nodes,
    hermite_coefficients,
    hermite_h,
    hermite_table,
    resolve_observable,
)


def test_low_degree_values():
    assert hermite_h(0, 2.7) == 1.0
    assert hermite_h(1, 2.7) == 2.7
    assert hermite_h(2, 3.0) == 8.0


def test_degree_six_against_monomials():
    x = 1.5
    assert hermite_h(6, x) == pytest.approx(x**6 - 15 * x**4 + 45 * x**2 - 15, rel=1e-14)


def test_negative_degree_rejected():
    with pytest.raises(ValueError):
        hermite_h(-1, 0.0)


def test_orthogonality_to_1e10():
    x, w = gauss_nodes(64)
    table = hermite_table(12, x)
    gram = (table * w) @ table.T
    expected = np.diag([math.factorial(q) for q in range(13)]).astype(float)
    assert np.max(np.abs(gram - expected) / np.sqrt(np.outer(np.diag(expected), np.diag(expected)))) < 1e-10


def test_square_expansion_and_parseval():
    e = hermite_coefficients(lambda x: x**2)
    assert e.mean == pytest.approx(1.0, abs=1e-12)
    assert e.a(2) == pytest.approx(1.0, abs=1e-12)
    assert e.rank == 2 and math.isinf(e.second_rank)
    assert e.l2_norm_sq == pytest.approx(3.0, abs=1e-10)


def test_sq_plus_lin():
    e = resolve_observable("sq_plus_lin").expansion()
    assert np.allclose(e.coeffs[:3], [1, 1, 1], atol=1e-12)
    assert (e.rank, e.second_rank) == (1, 2)


@pytest.mark.parametrize("u", [0.5, -0.3, 1.7])
def test_indicator_coefficients(u):
    e = resolve_observable(f"indicator_above:{u}").expansion()
    pdf = stats.norm.pdf(u)
    for q in range(1, 9):
        assert e.a(q) == pytest.approx(pdf * hermite_h(q - 1, u) / math.factorial(q), abs=1e-10)
    # independent oracle: adaptive quadrature on [u, inf)
    a1, _ = integrate.quad(lambda x: x * stats.norm.pdf(x), u, np.inf, epsabs=1e-13)
    assert e.a(1) == pytest.approx(a1, abs=1e-10)
    assert e.mean == pytest.approx(stats.norm.sf(u), abs=1e-10)
    assert e.rank == 1 and e.second_rank == 2


def test_indicator_half_value():
    assert resolve_observable("indicator_above:0.5").expansion().a(1) == pytest.approx(0.352065, abs=1e-6)


def test_indicator_parseval_partial_sums():
    # q! a_q^2 = pdf(u)^2 H_{q-1}(u)^2 / q! decays like q^{-3/2}; the defect shrinks slowly with q_max
    u = 0.5
    exact = [stats.norm.sf(u) ** 2] + [
        stats.norm.pdf(u) ** 2 * hermite_h(q - 1, u) ** 2 / math.factorial(q) for q in range(1, 41)]
    obs = resolve_observable(f"indicator_above:{u}")
    e20, e40 = obs.expansion(20), obs.expansion(40, 256)
    assert e20.l2_norm_sq == pytest.approx(sum(exact[:21]), abs=1e-10)
    assert e40.l2_norm_sq == pytest.approx(sum(exact), abs=1e-10)
    assert e20.l2_norm_sq < e40.l2_norm_sq < stats.norm.sf(u)


def test_abs_mean():
    e = resolve_observable("abs").expansion()
    assert e.mean == pytest.approx(math.sqrt(2 / math.pi), abs=1e-10)
    assert e.rank == 2 and not any(abs(e.a(q)) > 0 for q in range(1, 20, 2))


def test_quad_order_too_small():
    with pytest.raises(ValueError, match="quad_order"):
        hermite_coefficients(np.cos, q_max=20, quad_order=30)


def test_q_max_too_small():
    with pytest.raises(ValueError):
        hermite_coefficients(np.cos, q_max=1)


def test_nonfinite_names_node():
    with pytest.raises(ValueError, match="x="), np.errstate(divide="ignore"):
        hermite_coefficients(lambda x: 1.0 / np.where(np.abs(x) > 5, 0.0, 1.0))


@pytest.mark.parametrize("coeffs, summable, expected", [
    ([0, 0, 1], False, Case.RANK_TWO),
    ([0, 0, 0, 0, 1], False, Case.EVEN_RANK_GE4),
    ([0, 0, 0, 0, 0, 0, 1], False, Case.EVEN_RANK_GE4),
    ([0, 0, 1], True, Case.BREUER_MAJOR),
    ([0, 1, 1], False, Case.RANK_ONE_PRIME2),
    ([0, 1, 0, 0, 1], False, Case.RANK_ONE_PRIME4),
    ([0, 1, 0, 0, 0, 0, 1], False, Case.RANK_ONE_PRIME_GE5),
])
def test_classify(coeffs, summable, expected):
    assert classify_case(expansion_from_coeffs(coeffs), summable).case is expected


@pytest.mark.parametrize("coeffs, reason", [
    ([0, 1, 0, 1, 1], "(1,3) not covered"),
    ([0, 0, 0, 0, 0, 1, 1], "odd rank >= 3"),
    ([0, 1, 0, 1], "phi is odd"),
    ([0, 0, 0, 1], "phi is odd"),
])
def test_excluded(coeffs, reason):
    label = classify_case(expansion_from_coeffs(coeffs), False)
    assert label.case is Case.EXCLUDED and label.reason == reason


def test_constant_rejected():
    with pytest.raises(ValueError):
        classify_case(hermite_coefficients(lambda x: np.ones_like(x)), False)


@pytest.mark.parametrize("obs", ["hermite:2", "hermite:4", "hermite:6", "sq_plus_lin", "abs",
                                 "indicator_above:0.5", "poly:0,1,0,1"])
def test_rank_stable_under_tiny_perturbation(obs):
    f = resolve_observable(obs).func
    base = hermite_coefficients(f)
    bumped = hermite_coefficients(lambda x: f(x) + 1e-12 * np.sin(x))
    assert (base.rank, base.second_rank) == (bumped.rank, bumped.second_rank)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=7))
def test_polynomial_round_trip(cs):
    """Expanding a polynomial reproduces it exactly and Parseval matches E[phi^2]."""
    phi = resolve_observable("poly:" + ",".join(repr(c) for c in cs))
    e = phi.expansion()
    x = np.linspace(-3, 3, 13)
    scale = 1 + sum(abs(c) for c in cs) * 30
    assert np.allclose(e(x), phi(x), atol=1e-9 * scale)
    xg, wg = gauss_nodes(64)
    assert e.l2_norm_sq == pytest.approx(float(wg @ phi(xg) ** 2), rel=1e-9, abs=1e-12)
    evens = [q for q in range(2, len(cs), 2) if abs(e.a(q)) > 0]
    assert e.has_even_coeff == bool(evens)


@pytest.mark.parametrize("bad", ["hermite:-1", "poly:a", "indicator_above:", "abs:1", "nope"])
def test_bad_observable_ids(bad):
    with pytest.raises(ValueError):
        resolve_observable(bad)
