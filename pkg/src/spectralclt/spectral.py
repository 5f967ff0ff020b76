"""Isotropic spectral measures and the covariances they generate.

A unit-variance isotropic field has ``rho(r) = int b_d(r s) mu(ds)`` where
``mu`` is a probability measure on ``(0, inf)``.  Four kinds are supported:
an atom (Berry's model for ``s0 = 1``), the Bessel family ``mu_nu`` (law of
the square root of a ``Beta(d/2, nu - d/2 + 1)`` variable), a pure power law
``s^(beta-1) ds`` on ``(s_min, s_max]`` and a tabulated measure.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.special import betaln, gammaln

from .quadrature import QuadratureError, gauss_panels, jacobi_panel, panel_edges
from .special_functions import normalized_bessel_rho, radial_kernel_bd

QUAD_ATOL = 1e-8
# quarter period of exp(i r s) in s, per unit of r
_QUARTER = 0.5 * math.pi


class NonexistentFieldError(ValueError):
    """No Bessel Gaussian field of order ``nu`` exists in dimension ``d``."""

    def __init__(self, d, nu):
        super().__init__(f"no Bessel Gaussian field of order nu={nu} in dimension d={d}: need nu >= {d / 2 - 1}")
        self.d = d
        self.nu = nu


@dataclass(frozen=True)
class SpectralCondition:
    """Outcome of testing ``int s^(-d/R) mu(ds) < inf``."""

    finite: bool
    value: float | None = None
    warning: str | None = None

    def to_dict(self):
        out = {"finite": self.finite}
        if self.value is not None:
            out["value"] = self.value
        if self.warning:
            out["warning"] = self.warning
        return out


class SpectralMeasure:
    """Base class; every measure is a probability measure on ``(0, inf)``."""

    measure_id: str = ""
    total_mass = 1.0
    #: largest wavenumber in the support (sets the oscillation period of rho)
    s_max: float = 1.0

    def quadrature(self, max_width: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes ``s_i`` and weights ``w_i`` with ``sum w_i f(s_i) ~ int f dmu``."""
        raise NotImplementedError

    def expect(self, f, max_width: float = 0.05):
        nodes, weights = self.quadrature(max_width)
        return np.tensordot(weights, np.asarray(f(nodes)), axes=(0, 0))

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def decay_exponent(self, d: int) -> float:
        """``alpha`` such that ``|rho(r)| = O(r^-alpha)`` as ``r -> inf``."""
        raise NotImplementedError

    def negative_moment(self, p: float) -> SpectralCondition:
        raise NotImplementedError

    def __str__(self):
        return self.measure_id


@dataclass(frozen=True)
class Atom(SpectralMeasure):
    s0: float = 1.0

    def __post_init__(self):
        if not (self.s0 > 0 and math.isfinite(self.s0)):
            raise ValueError(f"atom location must be positive, got {self.s0!r}")

    @property
    def measure_id(self):
        return "berry" if self.s0 == 1.0 else f"atom:{self.s0:g}"

    @property
    def s_max(self):
        return self.s0

    def quadrature(self, max_width=0.05):
        return np.array([self.s0]), np.array([1.0])

    def sample(self, rng, size=None):
        return self.s0 if size is None else np.full(size, self.s0)

    def decay_exponent(self, d):
        return 0.5 * (d - 1)

    def negative_moment(self, p):
        return SpectralCondition(True, self.s0 ** (-p))


@dataclass(frozen=True)
class BesselFamily(SpectralMeasure):
    """``c s^(d-1) (1-s^2)^(nu-d/2)`` on ``(0, 1)``, defined for ``nu > d/2 - 1``."""

    d: int = 2
    nu: float = 1.0

    def __post_init__(self):
        if not self.nu > 0.5 * self.d - 1:
            raise ValueError(f"BesselFamily needs nu > d/2 - 1, got d={self.d}, nu={self.nu}")

    @property
    def measure_id(self):
        return f"bessel:{self.d},{self.nu:g}"

    @property
    def gamma(self) -> float:
        return self.nu - 0.5 * self.d

    @property
    def log_norm(self) -> float:
        """log of ``c_{d,nu}``; from ``u = s^2`` the mass is ``B(d/2, gamma+1) / (2c)``."""
        return math.log(2.0) - betaln(0.5 * self.d, self.gamma + 1.0)

    def density(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s > 0) & (s < 1)
        out = np.zeros_like(s)
        si = s[inside]
        out[inside] = np.exp(self.log_norm + (self.d - 1) * np.log(si) + self.gamma * np.log1p(-si * si))
        return out

    def quadrature(self, max_width=0.05):
        # interior panels: plain Gauss; last panel carries (1-s)^gamma exactly
        edges = panel_edges(0.0, 1.0, max_width)
        x, w = gauss_panels(edges[:-1])
        xl, wl = jacobi_panel(edges[-2], 1.0, 0.0, self.gamma)
        w = w * self.density(x)
        wl = wl * np.exp(self.log_norm + (self.d - 1) * np.log(xl) + self.gamma * np.log1p(xl))
        return np.concatenate([x, xl]), np.concatenate([w, wl])

    def sample(self, rng, size=None):
        return np.sqrt(rng.beta(0.5 * self.d, self.gamma + 1.0, size))

    def decay_exponent(self, d):
        return self.nu + 0.5 if d == self.d else 0.5 * (d + 1)

    def beta_moment(self, k: float) -> float:
        """``E[S^(2k)]``, the k-th moment of ``Beta(d/2, nu-d/2+1)``; finite for ``k > -d/2``."""
        a = 0.5 * self.d
        return math.exp(gammaln(a + k) + gammaln(self.nu + 1.0) - gammaln(a) - gammaln(self.nu + k + 1.0))

    def negative_moment(self, p):
        power = self.d - 1 - p
        if power <= -1:
            return SpectralCondition(False)
        value, err = integrate.quad(
            lambda s: math.exp(self.log_norm) * (1.0 + s) ** self.gamma, 0.0, 1.0,
            weight="alg", wvar=(power, self.gamma), epsabs=1e-13, epsrel=1e-12, limit=200)
        return SpectralCondition(True, value)


@dataclass(frozen=True)
class PowerLaw(SpectralMeasure):
    """Density proportional to ``s^(beta-1)`` on ``(s_min, s_max]``; ``mu((0, s]) ~ s^beta`` near 0."""

    beta: float = 0.4
    s_min: float = 0.0
    s_max: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"power-law exponent must be positive, got {self.beta}")
        if not 0 <= self.s_min < self.s_max:
            raise ValueError(f"need 0 <= s_min < s_max, got ({self.s_min}, {self.s_max})")

    @property
    def measure_id(self):
        if self.s_min == 0 and self.s_max == 1:
            return f"powerlaw:{self.beta:g}"
        return f"powerlaw:{self.beta:g},{self.s_min:g},{self.s_max:g}"

    @property
    def _span(self):
        return self.s_max**self.beta - self.s_min**self.beta

    def cdf(self, s):
        s = np.clip(np.asarray(s, dtype=float), self.s_min, self.s_max)
        return (s**self.beta - self.s_min**self.beta) / self._span

    def quadrature(self, max_width=0.05):
        edges = panel_edges(self.s_min, self.s_max, max_width)
        c = self.beta / self._span
        x, w = gauss_panels(edges[1:])
        w = w * c * x ** (self.beta - 1.0)
        x0, w0 = jacobi_panel(edges[0], edges[1], self.beta - 1.0 if self.s_min == 0 else 0.0)
        if self.s_min == 0:
            w0 = w0 * c
        else:
            w0 = w0 * c * x0 ** (self.beta - 1.0)
        return np.concatenate([x0, x]), np.concatenate([w0, w])

    def sample(self, rng, size=None):
        u = rng.random(size)
        return (self.s_min**self.beta + u * self._span) ** (1.0 / self.beta)

    def decay_exponent(self, d):
        edge = 0.5 * (d + 1)
        return min(self.beta, edge) if self.s_min == 0 else edge

    def negative_moment(self, p):
        if self.s_min == 0 and self.beta <= p:
            return SpectralCondition(False)
        c = self.beta / self._span
        e = self.beta - p
        if e == 0:
            value = c * math.log(self.s_max / self.s_min)
        else:
            value = c * (self.s_max**e - self.s_min**e) / e
        return SpectralCondition(True, value)


@dataclass(frozen=True)
class Tabulated(SpectralMeasure):
    """Measure read from ``(s, weight)`` pairs.

    The first weight is an atom at the first node (it stands for all mass
    below it); weight ``i > 0`` is spread uniformly over ``(s_{i-1}, s_i]``.
    Weights are renormalised to unit mass.
    """

    nodes: tuple = ()
    weights: tuple = ()
    source: str = ""
    warning: str | None = field(default=None, compare=False)

    def __post_init__(self):
        s = np.asarray(self.nodes, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if s.ndim != 1 or s.size == 0 or s.shape != w.shape:
            raise ValueError("tabulated measure needs equally long, nonempty node and weight lists")
        if np.any(np.diff(s) <= 0) or s[0] < 0:
            raise ValueError("tabulated nodes must be nonnegative and strictly increasing")
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("tabulated weights must be nonnegative with positive total")
        object.__setattr__(self, "weights", tuple(w / w.sum()))
        object.__setattr__(self, "nodes", tuple(s))
        if self.weights[0] > 0:
            object.__setattr__(self, "warning", "mass below the first node is lumped into an atom there")

    @property
    def measure_id(self):
        return f"table:{self.source}" if self.source else "table"

    @property
    def s_max(self):
        return self.nodes[-1]

    def quadrature(self, max_width=0.05):
        s = np.asarray(self.nodes)
        w = np.asarray(self.weights)
        xs, ws = [s[:1]], [w[:1]]
        for lo, hi, mass in zip(s[:-1], s[1:], w[1:]):
            if mass == 0:
                continue
            x, g = gauss_panels(panel_edges(lo, hi, max_width))
            xs.append(x)
            ws.append(g * mass / (hi - lo))
        return np.concatenate(xs), np.concatenate(ws)

    def sample(self, rng, size=None):
        s = np.asarray(self.nodes)
        w = np.asarray(self.weights)
        n = 1 if size is None else int(np.prod(size))
        idx = np.minimum(np.searchsorted(np.cumsum(w), rng.random(n), side="right"), len(w) - 1)
        lo = np.where(idx > 0, s[np.maximum(idx - 1, 0)], s[0])
        u = rng.random(n)
        out = np.where(idx > 0, lo + u * (s[idx] - lo), s[0])
        return float(out[0]) if size is None else out.reshape(size)

    def decay_exponent(self, d):
        return 0.5 * (d - 1) if self.weights[0] > 0 else 0.5 * (d + 1)

    def negative_moment(self, p):
        s = np.asarray(self.nodes)
        w = np.asarray(self.weights)
        if s[0] == 0 and w[0] > 0:
            return SpectralCondition(False, warning=self.warning)
        total = w[0] * s[0] ** (-p)
        for lo, hi, mass in zip(s[:-1], s[1:], w[1:]):
            if mass == 0:
                continue
            if lo == 0 and p >= 1:
                return SpectralCondition(False, warning=self.warning)
            if p == 1:
                part = math.log(hi / lo)
            else:
                part = (hi ** (1 - p) - lo ** (1 - p)) / (1 - p)
            total += mass / (hi - lo) * part
        return SpectralCondition(True, float(total), self.warning)


def bessel_spectral_measure(d: int, nu: float) -> SpectralMeasure:
    """Spectral measure of the Bessel field with covariance ``rho_nu``.

    Raises :class:`NonexistentFieldError` when ``nu < d/2 - 1``; the critical
    order ``d/2 - 1`` is the d-dimensional Berry model with ``mu = delta_1``.
    """
    critical = 0.5 * d - 1.0
    if nu < critical - 1e-12:
        raise NonexistentFieldError(d, nu)
    if abs(nu - critical) <= 1e-12:
        return Atom(1.0)
    return BesselFamily(d, nu)


def load_table(path) -> Tabulated:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                continue  # header line
    if not rows:
        raise ValueError(f"no (s, weight) rows in {path}")
    s, w = zip(*rows)
    return Tabulated(s, w, source=str(path))


def resolve_measure(measure_id: str) -> SpectralMeasure:
    """Parse ``berry``, ``atom:s0``, ``bessel:d,nu``, ``powerlaw:beta[,s_min,s_max]``, ``table:<path>``."""
    name, _, arg = measure_id.strip().partition(":")
    try:
        if name == "berry" and not arg:
            return Atom(1.0)
        if name == "atom":
            return Atom(float(arg))
        if name == "bessel":
            d, nu = arg.split(",")
            return bessel_spectral_measure(int(d), float(nu))
        if name == "powerlaw":
            parts = [float(v) for v in arg.split(",")]
            return PowerLaw(*parts)
        if name == "table":
            return load_table(Path(arg))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, NonexistentFieldError):
            raise
        raise ValueError(f"malformed measure id {measure_id!r}: {exc}") from None
    raise ValueError(f"unknown measure id {measure_id!r}")


def spectral_condition(mu: SpectralMeasure, d: int, rank: int) -> SpectralCondition:
    """Is ``int_0^inf s^(-d/R) mu(ds)`` finite?  Boundary cases count as divergent."""
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    result = mu.negative_moment(d / rank)
    if result.warning is None and isinstance(mu, Tabulated) and mu.warning:
        result = SpectralCondition(result.finite, result.value, mu.warning)
    return result


def covariance_summable(mu: SpectralMeasure, d: int, q: int) -> bool:
    """Whether ``int |C|^q < inf``, judged from the power-law decay of ``rho``."""
    return mu.decay_exponent(d) * q > d


def sample_wavenumber(mu: SpectralMeasure, rng: np.random.Generator, size=None):
    return mu.sample(rng, size)


def covariance_from_spectrum(mu: SpectralMeasure, d: int, r):
    """``rho(r) = int b_d(r s) mu(ds)`` by adaptive quadrature (closed form for an atom)."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("lag must be nonnegative")
    if isinstance(mu, Atom):
        return radial_kernel_bd(d, r_arr * mu.s0)
    out = np.array([_adaptive_rho(mu, d, float(x)) for x in np.atleast_1d(r_arr)])
    return out.reshape(r_arr.shape) if r_arr.ndim else float(out[0])


def _quad(f, a, b, **kw):
    limit = kw.pop("limit", 400)
    val, err = integrate.quad(f, a, b, epsabs=QUAD_ATOL * 1e-2, epsrel=1e-10, limit=limit, **kw)
    if err > QUAD_ATOL:
        raise QuadratureError(f"covariance quadrature achieved only {err:.3g}", err)
    return val


def _adaptive_rho(mu, d, r):
    if r == 0:
        return 1.0
    if isinstance(mu, BesselFamily):
        c = math.exp(mu.log_norm)
        return _quad(lambda s: c * (1 + s) ** mu.gamma * radial_kernel_bd(d, r * s), 0.0, 1.0,
                     weight="alg", wvar=(d - 1, mu.gamma))
    if isinstance(mu, PowerLaw):
        c = mu.beta / mu._span
        if mu.s_min == 0:
            return _quad(lambda s: c * radial_kernel_bd(d, r * s), 0.0, mu.s_max,
                         weight="alg", wvar=(mu.beta - 1.0, 0.0))
        return _quad(lambda s: c * s ** (mu.beta - 1) * radial_kernel_bd(d, r * s), mu.s_min, mu.s_max)
    if isinstance(mu, Tabulated):
        s = np.asarray(mu.nodes)
        w = np.asarray(mu.weights)
        total = w[0] * radial_kernel_bd(d, r * s[0])
        for lo, hi, mass in zip(s[:-1], s[1:], w[1:]):
            if mass:
                total += mass / (hi - lo) * _quad(lambda x: radial_kernel_bd(d, r * x), lo, hi)
        return float(total)
    raise TypeError(f"unsupported measure {mu!r}")


@dataclass(frozen=True)
class RadialCovariance:
    """Vectorised ``rho`` for a measure in dimension ``d``.

    Atoms and matching Bessel families use closed forms; other measures
    are integrated with Gauss panels narrow enough for the oscillation of
    ``b_d(r s)`` at each lag.
    """

    measure: SpectralMeasure
    d: int
    closed_form: bool = True

    @property
    def period(self) -> float:
        """Oscillation period of ``rho`` at large lags."""
        return 2.0 * math.pi / self.measure.s_max

    @property
    def decay(self) -> float:
        return self.measure.decay_exponent(self.d)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        mu = self.measure
        if isinstance(mu, Atom):
            return radial_kernel_bd(self.d, r * mu.s0)
        if self.closed_form and isinstance(mu, BesselFamily) and mu.d == self.d:
            return normalized_bessel_rho(mu.nu, r)
        flat = np.atleast_1d(r).ravel()
        out = np.empty_like(flat)
        order = np.argsort(flat)
        # group lags by magnitude so each group gets panels fine enough for its largest lag
        bounds = [0.0, 1.0]
        while bounds[-1] < flat.max(initial=0.0):
            bounds.append(bounds[-1] * 2.0)
        sorted_r = flat[order]
        start = 0
        for hi in bounds[1:]:
            stop = np.searchsorted(sorted_r, hi, side="right")
            if stop > start:
                rs = sorted_r[start:stop]
                nodes, weights = mu.quadrature(min(0.05, _QUARTER / max(hi, 1e-12)))
                vals = radial_kernel_bd(self.d, np.multiply.outer(nodes, rs))
                out[order[start:stop]] = weights @ vals
                start = stop
        return out.reshape(r.shape) if r.ndim else float(out[0])


def covariance_function(mu: SpectralMeasure, d: int) -> RadialCovariance:
    return RadialCovariance(mu, d)


__all__ = [
    "Atom", "BesselFamily", "PowerLaw", "Tabulated", "SpectralMeasure", "SpectralCondition",
    "NonexistentFieldError", "bessel_spectral_measure", "resolve_measure", "spectral_condition",
    "covariance_summable", "sample_wavenumber", "covariance_from_spectrum", "covariance_function",
    "RadialCovariance", "load_table",
]
