"""Observation windows: centred balls and cubes.

Each domain knows its covariogram ``g_D(x) = |D cap (x + D)|``, the Fourier
transform of its indicator and how to lay a cell-centred lattice over
``tD``.  Balls have smooth, curved boundaries (``|F[1_D](y)|`` decays like
``|y|^{-(d+1)/2}``); cubes do not (decay ``|y_i|^{-1}`` along axes), which
makes them a useful counterexample to the curvature hypothesis.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, betaln, roots_legendre

from .special_functions import ball_indicator_ft, ball_volume

DEFAULT_MAX_POINTS = 4_000_000


class DecayClass(enum.Enum):
    LITTLE_O_D2 = "LittleO_d2"
    BIG_O_D2 = "BigO_d2"
    SLOWER = "Slower"


class GridTooLargeError(ValueError):
    pass


@functools.lru_cache(maxsize=32)
def sphere_rule(d: int, n: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Directions on ``S^{d-1}`` with weights summing to 1.

    Trapezoid rule on the circle, Gauss-Legendre in ``cos(theta)`` times
    trapezoid in azimuth on ``S^2``, fixed-seed Monte Carlo beyond.
    """
    if d == 2:
        th = 2.0 * math.pi * (np.arange(4 * n) + 0.5) / (4 * n)
        return np.column_stack([np.cos(th), np.sin(th)]), np.full(4 * n, 1.0 / (4 * n))
    if d == 3:
        z, wz = roots_legendre(n)
        ph = 2.0 * math.pi * (np.arange(2 * n) + 0.5) / (2 * n)
        zz, pp = np.meshgrid(z, ph, indexing="ij")
        rr = np.sqrt(1.0 - zz**2)
        dirs = np.column_stack([(rr * np.cos(pp)).ravel(), (rr * np.sin(pp)).ravel(), zz.ravel()])
        w = np.repeat(wz / 2.0, 2 * n) / (2 * n)
        return dirs, w
    rng = np.random.default_rng(20240917 + d)
    g = rng.standard_normal((64 * n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True), np.full(64 * n, 1.0 / (64 * n))


class Domain:
    """Common interface; concrete domains are :class:`Ball` and :class:`Cube`."""

    d: int

    @property
    def volume(self) -> float:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    @property
    def half_extent(self) -> float:
        """Half side of the smallest centred cube containing the domain."""
        raise NotImplementedError

    def contains(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def covariogram(self, x):
        raise NotImplementedError

    def indicator_ft(self, y):
        raise NotImplementedError

    def radial_covariogram(self, r):
        """Spherical average of ``g_D`` at radius ``r``."""
        dirs, w = sphere_rule(self.d)
        r = np.asarray(r, dtype=float)
        vals = self.covariogram(np.multiply.outer(r, dirs))
        return vals @ w

    def radial_ft_sq(self, s):
        """Spherical average of ``|F[1_D]|^2`` at radius ``s``."""
        dirs, w = sphere_rule(self.d)
        s = np.asarray(s, dtype=float)
        vals = np.abs(self.indicator_ft(np.multiply.outer(s, dirs))) ** 2
        return vals @ w

    def radial_breakpoints(self) -> tuple:
        """Radii where ``radial_covariogram`` has kinks (for quadrature panels)."""
        return ()

    def lattice(self, t: float, h: float, max_points: int = DEFAULT_MAX_POINTS):
        """Cell-centred axis ``h (k + 1/2)`` covering ``tD`` and the mask of centres inside ``tD``."""
        if not (t > 0 and h > 0):
            raise ValueError(f"need t > 0 and h > 0, got t={t}, h={h}")
        k = int(math.ceil(t * self.half_extent / h))
        axis = h * (np.arange(-k, k) + 0.5)
        if axis.size**self.d > max_points:
            raise GridTooLargeError(
                f"lattice over tD has {axis.size}^{self.d} cells (> cap {max_points}); increase h")
        mesh = np.meshgrid(*([axis] * self.d), indexing="ij")
        pts = np.stack(mesh, axis=-1)
        mask = self.contains(pts / t)
        return axis, mask

    def grid(self, t: float, h: float, max_points: int = DEFAULT_MAX_POINTS):
        """Points of the lattice inside ``tD`` and the cell weight ``h^d``."""
        axis, mask = self.lattice(t, h, max_points)
        mesh = np.meshgrid(*([axis] * self.d), indexing="ij")
        pts = np.stack(mesh, axis=-1)[mask]
        return pts, h**self.d


@dataclass(frozen=True)
class Ball(Domain):
    d: int = 2
    radius: float = 1.0

    def __post_init__(self):
        if self.d < 1 or not self.radius > 0:
            raise ValueError(f"invalid ball: d={self.d}, radius={self.radius}")

    @property
    def domain_id(self):
        return f"ball:{self.d},{self.radius:g}"

    @property
    def volume(self):
        return ball_volume(self.d, self.radius)

    @property
    def diameter(self):
        return 2.0 * self.radius

    @property
    def half_extent(self):
        return self.radius

    @property
    def decay_class(self):
        return DecayClass.LITTLE_O_D2

    def contains(self, points):
        return np.linalg.norm(points, axis=-1) <= self.radius

    def lens(self, rho):
        """Covariogram as a function of ``|x|``: twice a hyperspherical cap volume."""
        rho = np.asarray(rho, dtype=float)
        a, d = self.radius, self.d
        u = np.clip(rho / (2.0 * a), 0.0, 1.0)
        # cap of a d-ball at height u a: alpha_{d-1} a^d B(1/2, (d+1)/2) I_{1-u^2}((d+1)/2, 1/2) / 2
        full = math.exp(math.log(ball_volume(d - 1)) + d * math.log(a) + betaln(0.5, 0.5 * (d + 1)))
        return full * betainc(0.5 * (d + 1), 0.5, 1.0 - u * u)

    def covariogram(self, x):
        x = np.asarray(x, dtype=float)
        return self.lens(np.linalg.norm(x, axis=-1))

    def radial_covariogram(self, r):
        return self.lens(r)

    def radial_breakpoints(self):
        # lens vanishes like (diam - r)^{(d+1)/2}; grade panels geometrically toward it
        return tuple(self.diameter * (1.0 - 2.0**-k) for k in range(1, 16))

    def indicator_ft(self, y):
        y = np.asarray(y, dtype=float)
        return np.asarray(ball_indicator_ft(self.d, self.radius, np.linalg.norm(y, axis=-1)), dtype=complex)[()]

    def radial_ft_sq(self, s):
        return ball_indicator_ft(self.d, self.radius, np.asarray(s, dtype=float)) ** 2


@dataclass(frozen=True)
class Cube(Domain):
    """Centred cube ``[-side/2, side/2]^d``."""

    d: int = 2
    side: float = 1.0

    def __post_init__(self):
        if self.d < 1 or not self.side > 0:
            raise ValueError(f"invalid cube: d={self.d}, side={self.side}")

    @property
    def domain_id(self):
        return f"cube:{self.d},{self.side:g}"

    @property
    def volume(self):
        return self.side**self.d

    @property
    def diameter(self):
        return self.side * math.sqrt(self.d)

    @property
    def half_extent(self):
        return 0.5 * self.side

    @property
    def decay_class(self):
        return DecayClass.SLOWER

    def contains(self, points):
        return np.max(np.abs(points), axis=-1) <= 0.5 * self.side

    def covariogram(self, x):
        x = np.asarray(x, dtype=float)
        return np.prod(np.clip(self.side - np.abs(x), 0.0, None), axis=-1)

    def indicator_ft(self, y):
        y = np.asarray(y, dtype=float)
        # 2 sin(L y/2)/y = L sinc(L y / 2pi) in numpy's normalised sinc
        return np.asarray(np.prod(self.side * np.sinc(self.side * y / (2.0 * math.pi)), axis=-1), dtype=complex)[()]

    def radial_breakpoints(self):
        return tuple(self.side * math.sqrt(k) for k in range(1, self.d + 1))


def resolve_domain(domain_id: str) -> Domain:
    """Parse ``ball:d,r`` or ``cube:d,side``."""
    name, _, arg = domain_id.strip().partition(":")
    try:
        d_str, size = arg.split(",")
        d, size = int(d_str), float(size)
    except ValueError:
        raise ValueError(f"malformed domain id {domain_id!r}") from None
    if name == "ball":
        return Ball(d, size)
    if name == "cube":
        return Cube(d, size)
    raise ValueError(f"unknown domain id {domain_id!r}")


def covariogram(domain: Domain, x):
    return domain.covariogram(x)


def indicator_ft(domain: Domain, y):
    return domain.indicator_ft(y)


def grid(domain: Domain, t: float, h: float, max_points: int = DEFAULT_MAX_POINTS):
    return domain.grid(t, h, max_points)
