import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from spectralclt.domain import Ball, Cube
from spectralclt.hermite import Case, CaseLabel, classify_case, expansion_from_coeffs, resolve_observable
from spectralclt.spectral import Atom, PowerLaw, RadialCovariance
from spectralclt.variance_theory import (
    contraction_ratio,
    predicted_rate,
    rank_one_variance,
    total_variance,
    v_qt,
    w_qt,
)

BERRY = RadialCovariance(Atom(1.0), 2)
DISK = Ball(2, 1.0)


def brute_w(q, t):
    """w_{q,t} for J0 by scipy quad on unit subintervals."""
    edges = np.arange(0.0, t + 1.0, 1.0)
    edges[-1] = t
    return 2 * math.pi * sum(integrate.quad(lambda r: special.j0(r) ** q * r, a, b)[0]
                             for a, b in zip(edges[:-1], edges[1:]))


def test_w_constant_covariance_is_disk_area():
    assert w_qt(lambda r: np.ones_like(r), 2, 1, 7.0) == pytest.approx(math.pi * 49)


@pytest.mark.parametrize("t", [1e2, 1e3, 1e4])
def test_w2_over_t_tends_to_two(t):
    w = w_qt(BERRY, 2, 2, t)
    if t <= 1e3:
        assert w == pytest.approx(brute_w(2, t), rel=1e-8)
    assert abs(w / t / 2 - 1) < 0.05


def test_w4_over_log_bounded():
    ratios = [w_qt(BERRY, 2, 4, t) / math.log(t) for t in (1e2, 1e3, 1e4)]
    assert w_qt(BERRY, 2, 4, 300.0) == pytest.approx(brute_w(4, 300.0), rel=1e-8)
    assert 0.5 < min(ratios) and max(ratios) < 3 and max(ratios) / min(ratios) < 1.5


@pytest.mark.parametrize("q", [2, 4, 6])
@pytest.mark.parametrize("t", [5.0, 40.0])
def test_v_bounded_by_volume_times_w(q, t):
    v = v_qt(BERRY, DISK, q, t)
    assert 0 <= v <= DISK.volume * w_qt(BERRY, 2, q, DISK.diameter * t)


def test_v6_limit_is_volume_times_integral():
    # int J0^6 over the plane: quad to 4000 plus the r^{-2} tail of the averaged envelope
    inf = brute_w(6, 4000.0) + 2 * math.pi * (2 / math.pi) ** 3 * (5 / 16) / 4000.0
    assert v_qt(BERRY, DISK, 6, 1e3) == pytest.approx(DISK.volume * inf, rel=0.02)


def test_v_against_two_dimensional_monte_carlo():
    rng = np.random.default_rng(4)
    t, n = 6.0, 10**6
    z = rng.uniform(-2 * t, 2 * t, (n, 2))
    f = special.j0(np.linalg.norm(z, axis=1)) ** 2 * DISK.covariogram(z / t) * (4 * t) ** 2
    assert abs(v_qt(BERRY, DISK, 2, t) - f.mean()) < 3 * f.std() / math.sqrt(n)


def test_var2_grows_like_t_cubed():
    ts = np.array([1e2, 1e3, 1e4])
    var = [2 * t**2 * v_qt(BERRY, DISK, 2, t) for t in ts]
    slope = stats.linregress(np.log(ts), np.log(var)).slope
    assert abs(slope - 3) < 0.1


@pytest.mark.parametrize("R", [2, 4])
def test_v_comparable_to_w(R):
    ratios = [v_qt(BERRY, DISK, R, t) / w_qt(BERRY, 2, R, t) for t in np.geomspace(10, 1e3, 7)]
    assert max(ratios) / min(ratios) < 20


@pytest.mark.parametrize("R", [2, 4])
def test_higher_chaos_share_shrinks(R):
    for q in (R + 2, R + 4):
        share = [math.factorial(q) * v_qt(BERRY, DISK, q, t) / (math.factorial(R) * v_qt(BERRY, DISK, R, t))
                 for t in (1e2, 1e3, 1e4)]
        assert share[0] > share[1] > share[2]


def test_reflected_covariance_same_integrals():
    mirrored = lambda r: BERRY(np.abs(-np.asarray(r)))
    mirrored.period = BERRY.period
    assert w_qt(mirrored, 2, 3, 20.0) == w_qt(BERRY, 2, 3, 20.0)
    assert v_qt(mirrored, DISK, 3, 20.0) == v_qt(BERRY, DISK, 3, 20.0)


@pytest.mark.parametrize("t", [2.0, 3.8317, 6.0, 25.0])
def test_rank_one_berry_closed_form(t):
    assert rank_one_variance(Atom(1.0), DISK, t) == pytest.approx(4 * math.pi**2 * t**2 * special.j1(t) ** 2,
                                                                   rel=1e-10, abs=1e-12)


def test_rank_one_vanishes_at_bessel_zero():
    z = special.jn_zeros(1, 1)[0]
    assert rank_one_variance(Atom(1.0), DISK, z) < 1e-4 * z**3


def test_rank_one_small_t_limit():
    for mu in (Atom(1.0), PowerLaw(0.4)):
        t = 1e-4
        assert rank_one_variance(mu, DISK, t) / t**4 == pytest.approx(DISK.volume**2, rel=1e-6)


def test_rank_one_equals_v1_route():
    # spectral and spatial formulas for the first chaos agree
    mu = PowerLaw(1.5, 0.0, 1.0)
    rho = RadialCovariance(mu, 2)
    t = 3.0
    assert rank_one_variance(mu, DISK, t) == pytest.approx(t**2 * v_qt(rho, DISK, 1, t), rel=1e-6)


def test_rank_one_cube_by_direction_average():
    c = Cube(2, 1.0)
    t = 2.0
    # Atom(1): average over the unit circle of |F[1_c](t u)|^2
    th = np.linspace(0, 2 * math.pi, 20001)[:-1]
    u = np.column_stack([np.cos(th), np.sin(th)])
    ref = t**4 * np.mean(np.abs(c.indicator_ft(t * u)) ** 2)
    assert rank_one_variance(Atom(1.0), c, t) == pytest.approx(ref, rel=1e-6)


def test_total_variance_single_term():
    e = resolve_observable("hermite:2").expansion()
    table = total_variance(e, BERRY, DISK, 20.0)
    assert table.q == [2]
    assert table.total_variance == pytest.approx(2 * 400 * v_qt(BERRY, DISK, 2, 20.0), rel=1e-12)
    assert table.dominant_q == 2 and table.mean == pytest.approx(0.0, abs=1e-9)


def test_total_variance_sq_plus_lin_second_chaos_dominates():
    table = total_variance(resolve_observable("sq_plus_lin").expansion(), BERRY, DISK, 100.0)
    q1, q2 = table.addends
    assert q2 > 10 * q1 and table.dominant_q == 2
    assert table.rank_one_variance == pytest.approx(4 * math.pi**2 * 1e4 * special.j1(100.0) ** 2)
    assert table.mean == pytest.approx(1e4 * math.pi)


def test_truncation_tail_for_polynomial():
    obs = resolve_observable("poly:0.3,1,-0.5,0,0.2")
    a = total_variance(obs.expansion(12), BERRY, DISK, 10.0).total_variance
    b = total_variance(obs.expansion(20), BERRY, DISK, 10.0).total_variance
    assert abs(a - b) < 1e-6 * b


def test_dominant_ties_go_to_smaller_q():
    # equal addends by construction: constant covariance gives q! t^d v identical after rescaling a_q
    flat = lambda r: np.ones_like(np.asarray(r, dtype=float))
    e = expansion_from_coeffs([0, 0, 1 / math.sqrt(2), 0, 1 / math.sqrt(24)])
    table = total_variance(e, flat, DISK, 2.0)
    assert table.addends[0] == pytest.approx(table.addends[1], rel=1e-12)
    assert table.dominant_q == 2


def test_table_serialization():
    table = total_variance(resolve_observable("hermite:4").expansion(), BERRY, DISK, 8.0)
    lines = table.to_csv().splitlines()
    assert lines[0] == "q,w_qt,v_qt,var_q" and lines[1].startswith("4,")
    assert '"dominant_q": 4' in table.to_json()


def _label(coeffs, summable=False):
    return classify_case(expansion_from_coeffs(coeffs), summable)


def test_predicted_berry_rates():
    r2 = predicted_rate(_label([0, 0, 1]), 2, Atom(1.0))
    assert (r2.exponent, r2.log_correction, r2.reference_quantity) == (3.0, False, "t^d*w_{2,t}")
    r4 = predicted_rate(_label([0, 0, 0, 0, 1]), 2, Atom(1.0))
    assert (r4.exponent, r4.log_correction) == (2.0, True)
    r1 = predicted_rate(_label([0, 1, 0, 0, 0, 0, 1]), 2)
    assert r1.case.case is Case.RANK_ONE_PRIME_GE5 and r1.reference_quantity == "t^d" and r1.exponent == 2
    r12 = predicted_rate(_label([0, 1, 1]), 2, Atom(1.0))
    assert r12.exponent == 3.0 and r12.reference_quantity == "t^d*w_{2,t}"


def test_predicted_rate_power_law_and_excluded():
    r = predicted_rate(_label([0, 0, 1]), 2, PowerLaw(0.4))
    # rho ~ r^{-0.4}: w_{2,t} ~ t^{2 - 0.8}
    assert r.exponent == pytest.approx(3.2)
    with pytest.raises(ValueError):
        predicted_rate(CaseLabel(Case.EXCLUDED, 3, math.inf, "odd rank >= 3"), 2)


def test_contraction_constant_covariance_exact():
    flat = lambda r: np.ones_like(np.asarray(r, dtype=float))
    t, q = 3.0, 2
    est = contraction_ratio(flat, DISK, q, 1, t, 2000, 0)
    V = math.pi * (2 * t) ** 2
    expected = t**2 * V**3 / (math.factorial(q) * t**2 * t**2 * DISK.volume**2) ** 2
    assert est.estimate == pytest.approx(expected, rel=1e-9) and est.std_error == pytest.approx(0, abs=1e-9 * expected)


def test_contraction_deterministic_and_validated():
    a = contraction_ratio(BERRY, DISK, 2, 1, 4.0, 5000, 1)
    b = contraction_ratio(BERRY, DISK, 2, 1, 4.0, 5000, 1)
    assert tuple(a) == tuple(b)
    with pytest.raises(ValueError):
        contraction_ratio(BERRY, DISK, 2, 2, 4.0, 5000, 1)
    with pytest.raises(ValueError):
        contraction_ratio(BERRY, DISK, 2, 1, 4.0, 10, 1)


def test_contraction_power_law_does_not_vanish():
    rho = RadialCovariance(PowerLaw(0.4), 2)
    e8 = contraction_ratio(rho, DISK, 2, 1, 8.0, 2 * 10**5, 3)
    e64 = contraction_ratio(rho, DISK, 2, 1, 64.0, 2 * 10**5, 3)
    assert e64.estimate > 0.5 * e8.estimate
