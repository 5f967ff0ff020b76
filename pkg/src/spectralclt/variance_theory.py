"""Chaos variances of ``Y_t = int_{tD} phi(B_x) dx`` and their growth in ``t``.

With ``rho`` the radial covariance, ``Var(Y_{q,t}) = q! t^d v_{q,t}`` where

    v_{q,t} = int rho(|z|)^q g_D(z / t) dz,    w_{q,t} = int_{|z| <= t} rho(|z|)^q dz.

Both are reduced to one-dimensional radial integrals.  The first chaos is
computed on the spectral side, ``int t^{2d} |F[1_D](t lambda)|^2 G(d lambda)``,
with ``F[f](y) = int f(x) exp(i <x, y>) dx``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .domain import Domain
from .field_sim import derive_seed
from .hermite import Case, CaseLabel, HermiteExpansion
from .quadrature import radial_integral
from .special_functions import unit_sphere_area
from .spectral import Atom, BesselFamily, RadialCovariance, SpectralMeasure

DEFAULT_PANEL = 0.5
RTOL = 1e-9


def _panel_width(rho) -> float:
    period = getattr(rho, "period", None)
    return period / 4.0 if period and math.isfinite(period) else DEFAULT_PANEL


def w_qt(rho, d: int, q: int, t: float, rtol: float = RTOL) -> float:
    """``w_{q,t} = |S^{d-1}| int_0^t rho(r)^q r^{d-1} dr``."""
    if q < 1 or not t > 0:
        raise ValueError(f"need q >= 1 and t > 0, got q={q}, t={t}")

    def f(r):
        return np.asarray(rho(r)) ** q * r ** (d - 1)

    return float(unit_sphere_area(d) * radial_integral(f, 0.0, t, _panel_width(rho), rtol=rtol))


def v_qt(rho, domain: Domain, q: int, t: float, rtol: float = RTOL) -> float:
    """``v_{q,t} = |S^{d-1}| int_0^{diam t} rho(r)^q r^{d-1} gbar_D(r/t) dr``."""
    if q < 1 or not t > 0:
        raise ValueError(f"need q >= 1 and t > 0, got q={q}, t={t}")
    d = domain.d

    def f(r):
        return np.asarray(rho(r)) ** q * r ** (d - 1) * domain.radial_covariogram(r / t)

    bps = tuple(t * b for b in domain.radial_breakpoints())
    return float(unit_sphere_area(d) * radial_integral(
        f, 0.0, domain.diameter * t, _panel_width(rho), bps, rtol=rtol))


def rank_one_variance(mu: SpectralMeasure, domain: Domain, t: float) -> float:
    """``Var(Y_{1,t}) = int t^{2d} avg_{|u|=1} |F[1_D](t s u)|^2 mu(ds)``."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    # |F[1_D](t s .)|^2 oscillates with period ~ pi / (t * half_width) in s
    width = min(0.05, 0.25 * math.pi / (t * domain.diameter))
    nodes, weights = mu.quadrature(width)
    return float(t ** (2 * domain.d) * weights @ domain.radial_ft_sq(t * nodes))


@dataclass
class VarianceTable:
    t: float
    q: list
    w: list
    v: list
    var_q: list
    coeffs: list
    total_variance: float
    dominant_q: int | None
    mean: float
    rank_one_variance: float | None = None

    @property
    def addends(self):
        return [a * a * vq for a, vq in zip(self.coeffs, self.var_q)]

    def rows(self):
        return [dict(q=q, w_qt=w, v_qt=v, var_q=vq) for q, w, v, vq in zip(self.q, self.w, self.v, self.var_q)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["q", "w_qt", "v_qt", "var_q"], lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: (repr(float(x)) if k != "q" else x) for k, x in row.items()})
        return buf.getvalue()

    def to_dict(self) -> dict:
        return dict(t=self.t, rows=self.rows(), total_variance=self.total_variance,
                    dominant_q=self.dominant_q, mean=self.mean,
                    rank_one_variance=self.rank_one_variance)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def total_variance(e: HermiteExpansion, rho, domain: Domain, t: float,
                   measure: SpectralMeasure | None = None, rtol: float = RTOL) -> VarianceTable:
    """Sum ``a_q^2 q! t^d v_{q,t}`` over the nonzero coefficients of ``e``.

    The ``q = 1`` term comes from :func:`rank_one_variance` when the spectral
    measure is known (taken from ``rho.measure`` if not passed).
    """
    if e.rank is None:
        raise ValueError("observable is constant; its variance is zero")
    d = domain.d
    if measure is None:
        measure = getattr(rho, "measure", None)
    qs, ws, vs, vqs, cs = [], [], [], [], []
    r1 = None
    for q in range(1, e.q_max + 1):
        a = e.a(q)
        if a == 0.0:
            continue
        w = w_qt(rho, d, q, t, rtol)
        if q == 1 and measure is not None:
            r1 = rank_one_variance(measure, domain, t)
            var = r1
            v = var / t**d
        else:
            v = v_qt(rho, domain, q, t, rtol)
            var = math.factorial(q) * t**d * v
        qs.append(q)
        ws.append(w)
        vs.append(v)
        vqs.append(var)
        cs.append(a)
    addends = np.array([a * a * vq for a, vq in zip(cs, vqs)])
    dominant = None
    if qs:
        # ties (to rounding) go to the smaller q
        top = addends.max()
        dominant = qs[int(np.flatnonzero(addends >= top * (1.0 - 1e-9))[0])]
    mean = e.mean * t**d * domain.volume
    return VarianceTable(t, qs, ws, vs, vqs, cs, float(addends.sum()), dominant, mean, r1)


@dataclass(frozen=True)
class RatePrediction:
    case: CaseLabel
    exponent: float | None
    log_correction: bool
    reference_quantity: str
    chaos: int | None = None

    def to_dict(self):
        return dict(case=str(self.case), exponent=self.exponent, log_correction=self.log_correction,
                    reference_quantity=self.reference_quantity, chaos=self.chaos)


def predicted_rate(case: CaseLabel, d: int, measure: SpectralMeasure | None = None) -> RatePrediction:
    """Growth of ``Var(Y_t)`` for a classified observable.

    The reference quantity depends only on the case.  When ``measure`` is
    given, ``rho ~ r^{-alpha}`` turns ``t^d w_{q,t}`` into
    ``t^{d + max(0, d - q alpha)}``, with a logarithm when ``q alpha = d``.
    """
    if case.excluded:
        raise ValueError(f"no rate for excluded case {case}")
    c = case.case
    if c in (Case.RANK_TWO, Case.EVEN_RANK_GE4):
        q, ref = case.rank, f"t^d*w_{{{case.rank},t}}"
    elif c in (Case.RANK_ONE_PRIME2, Case.RANK_ONE_PRIME4):
        q = int(case.second_rank)
        ref = f"t^d*w_{{{q},t}}"
    else:
        return RatePrediction(case, float(d), False, "t^d", None)
    if measure is None:
        return RatePrediction(case, None, False, ref, q)
    alpha = measure.decay_exponent(d)
    gap = d - q * alpha
    log = math.isclose(gap, 0.0, abs_tol=1e-12)
    return RatePrediction(case, d + max(0.0, gap) if not log else float(d), log, ref, q)


def _fast_rho(rho, r_max: float):
    """Closed form when available, else a cubic spline tabulation on ``[0, r_max]``."""
    if isinstance(rho, RadialCovariance) and (
            isinstance(rho.measure, Atom)
            or (rho.closed_form and isinstance(rho.measure, BesselFamily) and rho.measure.d == rho.d)):
        return rho
    # cubic spline error ~ step^4 / 384 for an oscillation of unit wavenumber
    step = min(0.2, _panel_width(rho) / 8.0)
    grid = np.linspace(0.0, r_max, int(math.ceil(r_max / step)) + 1)
    return CubicSpline(grid, np.asarray(rho(grid), dtype=float))


def _uniform_ball(rng, n, d, radius):
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * (radius * rng.random(n) ** (1.0 / d))[:, None]


@dataclass(frozen=True)
class ContractionEstimate:
    estimate: float
    std_error: float
    n_mc: int
    var_q: float = field(default=float("nan"))

    def __iter__(self):
        return iter((self.estimate, self.std_error))


def contraction_ratio(rho, domain: Domain, q: int, r: int, t: float, n_mc: int, seed: int,
                      chunk: int = 1 << 20, var_q: float | None = None) -> ContractionEstimate:
    """Monte Carlo estimate of the normalized contraction integral

        t^d / Var(Y_{q,t})^2 * int |C(x)|^r |C(y)|^r |C(z)|^{q-r} |C(x+y+z)|^{q-r} dx dy dz

    over ``x, y, z`` in the ball of radius ``diam(D) t``.  Chunk ``i`` draws
    from its own stream ``(seed, i)``, so the result depends on ``chunk``
    but not on evaluation order.
    """
    if not 1 <= r <= q - 1:
        raise ValueError(f"need 1 <= r <= q-1, got q={q}, r={r}")
    if n_mc < 1000:
        raise ValueError(f"n_mc must be >= 1000, got {n_mc}")
    d = domain.d
    radius = domain.diameter * t
    vol = math.pi ** (d / 2) / math.gamma(d / 2 + 1) * radius**d
    if var_q is None:
        var_q = math.factorial(q) * t**d * v_qt(rho, domain, q, t)
    c = _fast_rho(rho, 3.0 * radius)
    total = 0.0
    total_sq = 0.0
    done = 0
    for i in range(math.ceil(n_mc / chunk)):
        n = min(chunk, n_mc - done)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(derive_seed(seed, i))))
        x, y, z = (_uniform_ball(rng, n, d, radius) for _ in range(3))
        cx = np.abs(c(np.linalg.norm(x, axis=1)))
        cy = np.abs(c(np.linalg.norm(y, axis=1)))
        cz = np.abs(c(np.linalg.norm(z, axis=1)))
        cs = np.abs(c(np.linalg.norm(x + y + z, axis=1)))
        f = (cx * cy) ** r * (cz * cs) ** (q - r)
        total += f.sum()
        total_sq += (f * f).sum()
        done += n
    mean = total / n_mc
    var = max(total_sq / n_mc - mean * mean, 0.0)
    scale = vol**3 * t**d / var_q**2
    return ContractionEstimate(mean * scale, math.sqrt(var / n_mc) * scale, n_mc, var_q)
