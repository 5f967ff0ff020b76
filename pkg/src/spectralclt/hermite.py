"""Hermite expansions of observables under the standard Gaussian measure.

Polynomials are the probabilists' ones (``E[H_p(N) H_q(N)] = q! delta_pq``)
and coefficients are ``a_q = E[phi(N) H_q(N)] / q!``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad_vec
from scipy.special import roots_hermitenorm

RANK_TOL = 1e-9
DEFAULT_Q_MAX = 20
DEFAULT_QUAD_ORDER = 128


def hermite_h(q: int, x):
    """``H_q(x)`` by the recurrence ``H_{q+1} = x H_q - q H_{q-1}``."""
    if int(q) != q or q < 0:
        raise ValueError(f"Hermite degree must be a nonnegative integer, got {q!r}")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x.copy()
    if q == 0:
        return prev if x.ndim else float(prev)
    for k in range(1, int(q)):
        prev, cur = cur, x * cur - k * prev
    return cur if x.ndim else float(cur)


def hermite_table(q_max: int, x) -> np.ndarray:
    """Rows ``H_0(x), ..., H_{q_max}(x)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((q_max + 1,) + x.shape)
    out[0] = 1.0
    if q_max >= 1:
        out[1] = x
    for k in range(1, q_max):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


def gauss_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes and weights for the standard normal density."""
    x, w = roots_hermitenorm(order)
    return x, w / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class HermiteExpansion:
    """Truncated expansion ``phi = a_0 + sum_{q=1}^{q_max} a_q H_q``.

    ``coeffs[q]`` holds ``a_q`` (``coeffs[0]`` is the mean).  ``rank`` is
    ``None`` for a constant observable and ``second_rank`` is ``math.inf``
    when nothing beyond the leading term survives up to ``q_max``.
    """

    coeffs: np.ndarray
    rank: int | None
    second_rank: float
    has_even_coeff: bool
    l2_norm_sq: float

    @property
    def mean(self) -> float:
        return float(self.coeffs[0])

    @property
    def q_max(self) -> int:
        return len(self.coeffs) - 1

    def a(self, q: int) -> float:
        return float(self.coeffs[q]) if q <= self.q_max else 0.0

    def chaos_weights(self) -> np.ndarray:
        """``q! a_q^2`` for ``q = 0..q_max``: the variance carried by each chaos."""
        q = np.arange(self.q_max + 1)
        fact = np.array([math.factorial(int(k)) for k in q], dtype=float)
        return fact * self.coeffs**2

    def __call__(self, x):
        table = hermite_table(self.q_max, x)
        return np.tensordot(self.coeffs, table, axes=1)


def expansion_from_coeffs(coeffs, tol: float = RANK_TOL) -> HermiteExpansion:
    """Build an expansion from known coefficients, detecting ranks."""
    coeffs = np.asarray(coeffs, dtype=float)
    fact = np.array([math.factorial(k) for k in range(len(coeffs))], dtype=float)
    weights = fact * coeffs**2
    l2 = float(weights.sum())
    scale = math.sqrt(l2) if l2 > 0 else 1.0
    nonzero = np.sqrt(weights) > tol * scale
    nonzero[0] = False
    qs = np.flatnonzero(nonzero)
    rank = int(qs[0]) if qs.size else None
    second = float(qs[1]) if qs.size > 1 else math.inf
    has_even = bool(np.any(nonzero[2::2]))
    zeroed = np.where(nonzero, coeffs, 0.0)
    zeroed[0] = coeffs[0]
    return HermiteExpansion(zeroed, rank, second, has_even, l2)


def _eval_on(phi: Callable, x: np.ndarray) -> np.ndarray:
    try:
        values = np.asarray(phi(x), dtype=float)
        if values.shape != x.shape:
            raise TypeError
    except (TypeError, ValueError):
        values = np.array([float(phi(xi)) for xi in x])
    bad = ~np.isfinite(values)
    if bad.any():
        node = x[np.flatnonzero(bad)[0]]
        raise ValueError(f"observable is not finite at quadrature node x={node!r}")
    return values


def _gauss_hermite_coeffs(phi, q_max, order, fact):
    x, w = gauss_nodes(order)
    return hermite_table(q_max, x) @ (w * _eval_on(phi, x)) / fact


def _breakpoints(phi, half_width, n=4001):
    """Grid locations where the second difference of ``phi`` spikes (jumps, kinks)."""
    xs = np.linspace(-half_width, half_width, n)
    f = _eval_on(phi, xs)
    d2 = np.abs(np.diff(f, 2))
    neighbours = np.maximum(np.r_[d2[2:], 0.0, 0.0], np.r_[0.0, 0.0, d2[:-2]])
    scale = np.abs(f).max() + 1e-300
    flagged = np.flatnonzero(d2 > 10.0 * neighbours + 1e-9 * scale)
    return xs[flagged + 1]


def _adaptive_coeffs(phi, q_max, fact, half_width=14.0):
    pts = _breakpoints(phi, half_width)

    def integrand(x):
        val = _eval_on(phi, np.array([x]))[0]
        return val * math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi) * hermite_table(q_max, x) / fact

    coeffs, _ = quad_vec(integrand, -half_width, half_width, points=pts if pts.size else None,
                         epsabs=1e-14, epsrel=1e-12, limit=4000)
    return coeffs


def hermite_coefficients(
    phi: Callable,
    q_max: int = DEFAULT_Q_MAX,
    quad_order: int = DEFAULT_QUAD_ORDER,
    tol: float = RANK_TOL,
) -> HermiteExpansion:
    """Expand ``phi`` against the standard normal weight.

    Gauss-Hermite with ``quad_order`` nodes is used when it agrees with a
    rule of twice the order; otherwise (jumps, kinks) the coefficients come
    from adaptive quadrature split at the detected breakpoints.
    """
    if q_max < 2:
        raise ValueError(f"q_max must be >= 2, got {q_max}")
    if quad_order < 2 * q_max:
        raise ValueError(f"quad_order={quad_order} too small for q_max={q_max}; need >= {2 * q_max}")
    fact = np.array([math.factorial(k) for k in range(q_max + 1)], dtype=float)
    coeffs = _gauss_hermite_coeffs(phi, q_max, quad_order, fact)
    check = _gauss_hermite_coeffs(phi, q_max, 2 * quad_order, fact)
    norm = math.sqrt(float(np.sum(fact * check**2))) or 1.0
    gap = np.max(np.sqrt(fact) * np.abs(coeffs - check))
    if not gap <= 1e-11 * norm:
        coeffs = _adaptive_coeffs(phi, q_max, fact)
    return expansion_from_coeffs(coeffs, tol)


class Case(enum.Enum):
    BREUER_MAJOR = "BreuerMajor"
    EVEN_RANK_GE4 = "EvenRankGE4"
    RANK_TWO = "RankTwo"
    RANK_ONE_PRIME2 = "RankOnePrime2"
    RANK_ONE_PRIME4 = "RankOnePrime4"
    RANK_ONE_PRIME_GE5 = "RankOnePrimeGE5"
    EXCLUDED = "Excluded"


@dataclass(frozen=True)
class CaseLabel:
    case: Case
    rank: int
    second_rank: float
    reason: str | None = None

    @property
    def excluded(self) -> bool:
        return self.case is Case.EXCLUDED

    def __str__(self):
        if self.reason:
            return f"{self.case.value}({self.reason})"
        return self.case.value


def classify_case(e: HermiteExpansion, c_summable_at_rank: bool) -> CaseLabel:
    """Place ``(R, R')`` in the limit-theorem case table.

    Odd observables are excluded first since their variance can vanish;
    a covariance in ``L^R`` puts everything else in the Breuer-Major regime.
    """
    if e.rank is None:
        raise ValueError("observable is constant (Hermite rank none); nothing to classify")
    r, rp = e.rank, e.second_rank

    def label(case, reason=None):
        return CaseLabel(case, r, rp, reason)

    if not e.has_even_coeff:
        return label(Case.EXCLUDED, "phi is odd")
    if c_summable_at_rank:
        return label(Case.BREUER_MAJOR)
    if r >= 3 and r % 2 == 1:
        return label(Case.EXCLUDED, "odd rank >= 3")
    if r == 2:
        return label(Case.RANK_TWO)
    if r % 2 == 0:
        return label(Case.EVEN_RANK_GE4)
    # r == 1
    if rp == 2:
        return label(Case.RANK_ONE_PRIME2)
    if rp == 3:
        return label(Case.EXCLUDED, "(1,3) not covered")
    if rp == 4:
        return label(Case.RANK_ONE_PRIME4)
    return label(Case.RANK_ONE_PRIME_GE5)


@dataclass(frozen=True)
class Observable:
    """A named observable ``phi`` usable in config files."""

    id: str
    func: Callable

    def __call__(self, x):
        return self.func(x)

    def expansion(self, q_max: int = DEFAULT_Q_MAX, quad_order: int = DEFAULT_QUAD_ORDER):
        return hermite_coefficients(self.func, q_max, quad_order)


def resolve_observable(obs_id: str) -> Observable:
    """Parse ``hermite:q``, ``poly:c0,c1,...``, ``indicator_above:u``, ``abs``, ``sq_plus_lin``."""
    name, _, arg = obs_id.strip().partition(":")
    try:
        if name == "hermite":
            q = int(arg)
            if q < 0:
                raise ValueError
            return Observable(obs_id, lambda x: hermite_h(q, x))
        if name == "poly":
            cs = [float(c) for c in arg.split(",")]
            return Observable(obs_id, lambda x: np.polynomial.polynomial.polyval(x, cs))
        if name == "indicator_above":
            u = float(arg)
            return Observable(obs_id, lambda x: (np.asarray(x) >= u).astype(float))
    except ValueError:
        raise ValueError(f"malformed observable id {obs_id!r}") from None
    if name == "abs" and not arg:
        return Observable(obs_id, np.abs)
    if name == "sq_plus_lin" and not arg:
        return Observable(obs_id, lambda x: np.asarray(x) + np.asarray(x) ** 2)
    raise ValueError(f"unknown observable id {obs_id!r}")
