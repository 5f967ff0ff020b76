"""Composite Gauss rules on panels, with optional algebraic end weights."""
from __future__ import annotations

import functools
import math

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

NODES = 20


class QuadratureError(RuntimeError):
    """Raised when a quadrature misses its tolerance; carries the achieved error."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


@functools.lru_cache(maxsize=None)
def _legendre(n):
    return roots_legendre(n)


@functools.lru_cache(maxsize=None)
def _jacobi(n, alpha, beta):
    return roots_jacobi(n, alpha, beta)


def panel_edges(a: float, b: float, width: float, breakpoints=()) -> np.ndarray:
    """Edges of panels no wider than ``width`` covering ``[a, b]``, aligned to breakpoints."""
    cuts = sorted({a, b, *(p for p in breakpoints if a < p < b)})
    edges = [np.array([cuts[0]])]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        n = max(1, int(math.ceil((hi - lo) / width)))
        edges.append(np.linspace(lo, hi, n + 1)[1:])
    return np.concatenate(edges)


def gauss_panels(edges: np.ndarray, n: int = NODES) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of an ``n``-point Gauss-Legendre rule on every panel."""
    x, w = _legendre(n)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + half * (x + 1.0)).ravel()
    weights = (half * w).ravel()
    return nodes, weights


def jacobi_panel(lo: float, hi: float, left_power: float = 0.0, right_power: float = 0.0,
                 n: int = NODES) -> tuple[np.ndarray, np.ndarray]:
    """Rule for ``int_lo^hi f(x) (x-lo)^left_power (hi-x)^right_power dx``."""
    x, w = _jacobi(n, float(right_power), float(left_power))
    half = 0.5 * (hi - lo)
    scale = half ** (1.0 + left_power + right_power)
    return lo + half * (x + 1.0), w * scale


def radial_integral(f, a: float, b: float, width: float, breakpoints=(), rtol: float = 1e-9,
                    atol: float = 0.0):
    """``int_a^b f(r) dr`` by composite Gauss-Legendre, checked against a half-order rule.

    ``f`` must accept an array of nodes and may return an array whose
    trailing axes are integrated independently.
    """
    if b <= a:
        return 0.0
    edges = panel_edges(a, b, width, breakpoints)
    x_hi, w_hi = gauss_panels(edges, NODES)
    x_lo, w_lo = gauss_panels(edges, NODES // 2)
    f_hi = np.asarray(f(x_hi))
    f_lo = np.asarray(f(x_lo))
    hi = np.tensordot(w_hi, f_hi, axes=(0, 0))
    lo = np.tensordot(w_lo, f_lo, axes=(0, 0))
    err = np.max(np.abs(hi - lo))
    scale = np.max(np.tensordot(w_hi, np.abs(f_hi), axes=(0, 0)))
    if err > max(atol, rtol * scale) and err > 1e-12 * scale:
        raise QuadratureError(f"radial quadrature on [{a}, {b}] missed tolerance: error {err:.3g}", err)
    return hi
