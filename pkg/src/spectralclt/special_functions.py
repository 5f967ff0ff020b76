"""Bessel functions of the first kind and the radial kernels built from them.

Everything here is vectorised over the argument and evaluated in double
precision.  ``J_nu`` is computed from its power series for small arguments
and from the Hankel asymptotic expansion for large ones; the switch radius
is ``max(12, 2 nu**2)``.

Fourier transforms follow ``F[f](y) = int f(x) exp(i<x, y>) dx`` (no 2*pi
factor).
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

SERIES_RADIUS = 12.0
_EPS = 1e-17


def switch_radius(nu: float) -> float:
    """Argument above which the asymptotic branch is used for order ``nu``."""
    return max(SERIES_RADIUS, 2.0 * nu * nu)


def _check_order(nu):
    if not math.isfinite(nu):
        raise ValueError(f"Bessel order must be finite, got {nu!r}")
    if nu < 0:
        raise ValueError(f"Bessel order must be nonnegative, got {nu!r}")


def _as_nonneg_array(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if np.any(arr < 0):
        raise ValueError(f"{name} must be nonnegative")
    return arr


def _series_terms(xmax: float) -> int:
    # terms decay super-exponentially once j > x/2
    return 30 + int(1.5 * xmax)


def _reduced_series(nu: float, x: np.ndarray) -> np.ndarray:
    """sum_j (-1)^j Gamma(nu+1) (x^2/4)^j / (j! Gamma(j+nu+1)), i.e. rho_nu(x)."""
    out = np.ones_like(x)
    if x.size == 0:
        return out
    z = 0.25 * x * x
    term = np.ones_like(x)
    for j in range(1, _series_terms(float(x.max())) + 1):
        term = term * (-z / (j * (j + nu)))
        out += term
        if np.all(np.abs(term) <= _EPS * np.maximum(np.abs(out), 1e-300)):
            break
    return out


def _hankel(nu: float, x: np.ndarray) -> np.ndarray:
    """Hankel expansion with optimal (smallest-term) truncation per element."""
    mu = 4.0 * nu * nu
    p = np.ones_like(x)
    q = np.zeros_like(x)
    idx = np.arange(x.size)
    xs = x.ravel()
    term = np.ones_like(xs)
    for k in range(1, 200):
        new = term * (mu - (2 * k - 1) ** 2) / (8.0 * k * xs)
        # stop an element once its terms start growing (asymptotic series)
        keep = np.abs(new) < np.abs(term)
        idx, xs, new = idx[keep], xs[keep], new[keep]
        if idx.size == 0:
            break
        sign = -1.0 if (k // 2) % 2 else 1.0
        target = q if k % 2 else p
        target.flat[idx] += sign * new
        keep = np.abs(new) > _EPS
        idx, xs, term = idx[keep], xs[keep], new[keep]
        if idx.size == 0:
            break
    omega = x - 0.5 * nu * math.pi - 0.25 * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(omega) - q * np.sin(omega))


def _j_series(nu: float, x: np.ndarray) -> np.ndarray:
    if nu == 0:
        return _reduced_series(nu, x)
    with np.errstate(divide="ignore"):
        pre = np.exp(nu * np.log(0.5 * x) - gammaln(nu + 1.0))
    return pre * _reduced_series(nu, x)


def _j_recurrence(nu: float, x: np.ndarray) -> np.ndarray:
    """Forward recurrence from the fractional part of ``nu``; stable for x > nu."""
    n = int(math.floor(nu))
    frac = nu - n
    j_prev = _hankel(frac, x)
    if n == 0:
        return j_prev
    j_cur = _hankel(frac + 1.0, x)
    for k in range(1, n):
        order = frac + k
        j_prev, j_cur = j_cur, (2.0 * order / x) * j_cur - j_prev
    return j_cur


def _bessel_j_array(nu: float, x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    big = x > switch_radius(nu)
    small = x <= SERIES_RADIUS
    middle = ~big & ~small
    if small.any():
        out[small] = _j_series(nu, x[small])
    if big.any():
        out[big] = _hankel(nu, x[big])
    if middle.any():
        xm = x[middle]
        rec = xm > nu
        vals = np.empty_like(xm)
        if rec.any():
            vals[rec] = _j_recurrence(nu, xm[rec])
        if (~rec).any():
            vals[~rec] = _j_series(nu, xm[~rec])
        out[middle] = vals
    return out


def bessel_j(nu: float, x):
    """Bessel function of the first kind ``J_nu(x)`` for ``nu, x >= 0``.

    Accepts a scalar or an array for ``x`` and returns the same shape.
    """
    _check_order(nu)
    arr = _as_nonneg_array(x)
    out = _bessel_j_array(float(nu), np.atleast_1d(arr).astype(float))
    return out.reshape(arr.shape) if arr.ndim else float(out[0])


def normalized_bessel_rho(nu: float, r):
    """``rho_nu(r) = Gamma(nu+1) (2/r)^nu J_nu(r)``, equal to 1 at ``r = 0``."""
    _check_order(nu)
    arr = _as_nonneg_array(r, "r")
    x = np.atleast_1d(arr).astype(float)
    out = np.empty_like(x)
    small = x <= SERIES_RADIUS
    if small.any():
        out[small] = _reduced_series(float(nu), x[small])
    if (~small).any():
        xl = x[~small]
        logpre = gammaln(nu + 1.0) + nu * np.log(2.0 / xl)
        out[~small] = np.exp(logpre) * _bessel_j_array(float(nu), xl)
    return out.reshape(arr.shape) if arr.ndim else float(out[0])


def radial_kernel_bd(d: int, r):
    """Spherical average of ``exp(i<lambda, xi>)`` over the unit sphere at ``|lambda| = r``.

    Equals ``rho_{d/2-1}(r)``; ``b_2 = J_0`` and ``b_3(r) = sin(r)/r``.
    """
    if int(d) != d or d < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {d!r}")
    return normalized_bessel_rho(0.5 * d - 1.0, r)


def ball_volume(d: int, radius: float = 1.0) -> float:
    return math.pi ** (0.5 * d) / math.gamma(0.5 * d + 1.0) * radius**d


def unit_sphere_area(d: int) -> float:
    """Surface measure of S^{d-1}."""
    return 2.0 * math.pi ** (0.5 * d) / math.gamma(0.5 * d)


def ball_indicator_ft(d: int, radius: float, s):
    """Fourier transform of the indicator of the centred ball of given radius, at ``|y| = s``.

    ``F[1_ball](y) = Vol(ball) * rho_{d/2}(radius * |y|)``; for ``d = 2``,
    ``radius = 1`` this is ``2 pi J_1(s)/s``.
    """
    if int(d) != d or d < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {d!r}")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius!r}")
    s_arr = _as_nonneg_array(s, "s")
    return ball_volume(d, radius) * normalized_bessel_rho(0.5 * d, radius * s_arr)
