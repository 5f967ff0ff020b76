import math

import numpy as np
import pytest
from scipy import integrate, special

from spectralclt.domain import Ball, Cube, DecayClass, GridTooLargeError, grid, resolve_domain, sphere_rule


def test_basic_geometry():
    b, c = Ball(2, 1.0), Cube(3, 2.0)
    assert b.volume == pytest.approx(math.pi) and b.diameter == 2.0
    assert c.volume == 8.0 and c.diameter == pytest.approx(2 * math.sqrt(3))
    assert b.decay_class is DecayClass.LITTLE_O_D2 and c.decay_class is DecayClass.SLOWER


@pytest.mark.parametrize("dom", [Ball(2, 1), Ball(3, 0.7), Ball(4, 1.3), Cube(2, 1), Cube(3, 2)])
def test_covariogram_at_zero_is_volume(dom):
    assert dom.covariogram(np.zeros(dom.d)) == pytest.approx(dom.volume, rel=1e-13)


def test_tangent_disks():
    assert Ball(2, 1).covariogram(np.array([2.0, 0.0])) == 0.0
    assert Ball(2, 1).covariogram(np.array([3.0, 1.0])) == 0.0


def test_disk_lens_against_hit_or_miss():
    rng = np.random.default_rng(7)
    n = 10**7
    pts = rng.uniform(-1, 1, size=(n, 2))
    inside = (pts**2).sum(1) <= 1
    shifted = ((pts - [1.0, 0.0]) ** 2).sum(1) <= 1
    mc = 4.0 * np.mean(inside & shifted)
    exact = 2 * math.acos(0.5) - 0.5 * math.sqrt(3)
    assert abs(mc - exact) < 2e-3
    assert Ball(2, 1).covariogram(np.array([1.0, 0.0])) == pytest.approx(exact, abs=1e-12)


@pytest.mark.parametrize("r", [0.1, 0.7, 1.5])
def test_ball_lens_d3_closed_form(r):
    assert Ball(3, 1).lens(r) == pytest.approx(math.pi / 12 * (4 + r) * (2 - r) ** 2, rel=1e-12)


@pytest.mark.parametrize("rho", [0.4, 1.1, 1.9])
def test_ball_lens_d4_by_slicing(rho):
    # overlap of two unit 4-balls = int over x1 of the 3-ball slice volume
    def slice_vol(x):
        a = min(1 - x * x, 1 - (x - rho) ** 2)
        return 4 / 3 * math.pi * max(a, 0.0) ** 1.5

    val, _ = integrate.quad(slice_vol, rho - 1, 1, points=[rho / 2], epsabs=1e-12)
    assert Ball(4, 1).lens(rho) == pytest.approx(val, rel=1e-9)


def test_cube_covariogram_product():
    c = Cube(2, 1.0)
    assert c.covariogram(np.array([0.25, -0.5])) == pytest.approx(0.75 * 0.5)
    assert c.covariogram(np.array([1.2, 0.0])) == 0.0


@pytest.mark.parametrize("dom", [Ball(2, 1), Cube(2, 1.5), Ball(3, 1)])
def test_covariogram_symmetry_bounds_continuity(dom):
    rng = np.random.default_rng(0)
    x = rng.uniform(-dom.diameter, dom.diameter, size=(2000, dom.d))
    g = dom.covariogram(x)
    assert np.allclose(g, dom.covariogram(-x))
    assert np.all(g >= 0) and np.all(g <= dom.volume + 1e-12)
    # Lipschitz: |g(x) - g(x + h e)| is O(h)
    h = 1e-5
    e = np.zeros(dom.d)
    e[0] = h
    assert np.max(np.abs(dom.covariogram(x + e) - g)) < 10 * h * dom.volume / dom.diameter * dom.d


def test_indicator_ft_values():
    assert Ball(2, 1).indicator_ft(np.zeros(2)) == pytest.approx(math.pi)
    assert abs(Cube(2, 1).indicator_ft(np.array([2 * math.pi, 0.0]))) < 1e-15
    assert Cube(2, 2.0).indicator_ft(np.zeros(2)) == pytest.approx(4.0)


@pytest.mark.parametrize("y", [(5.0, 0.0), (3.0, 4.0)])
def test_disk_ft_by_quadrature(y):
    y = np.array(y)
    val, _ = integrate.dblquad(lambda th, r: math.cos(r * (y[0] * math.cos(th) + y[1] * math.sin(th))) * r,
                               0, 1, 0, 2 * math.pi, epsabs=1e-12, epsrel=1e-12)
    assert Ball(2, 1).indicator_ft(y).real == pytest.approx(val, abs=1e-6)
    assert val == pytest.approx(2 * math.pi * special.j1(5) / 5, abs=1e-6)


@pytest.mark.parametrize("d", [2, 3])
def test_plancherel_volume_ball(d):
    # int |F[1_B]|^2 dy / (2 pi)^d = Vol(B), radially
    from spectralclt.special_functions import unit_sphere_area

    b = Ball(d, 1)
    f = lambda s: b.radial_ft_sq(s) * s ** (d - 1)
    edges = np.arange(0, 4001, 5.0)
    total = sum(integrate.quad(f, lo, hi, limit=200)[0] for lo, hi in zip(edges[:-1], edges[1:]))
    # beyond 4000: F = (2 pi)^{d/2} s^{-d/2} J_{d/2}(s) and J^2 averages to 1/(pi s)
    tail = (2 * math.pi) ** d / math.pi / 4000.0
    est = unit_sphere_area(d) * (total + tail) / (2 * math.pi) ** d
    assert est == pytest.approx(b.volume, rel=1e-4)


def test_covariogram_fourier_duality_ball():
    """F[g_D](y) = |F[1_D](y)|^2 at random y, by radial quadrature of the covariogram."""
    b = Ball(2, 1)
    rng = np.random.default_rng(5)
    for s in rng.uniform(0, 8, 20):
        # isotropic: F[g](s) = 2 pi int_0^2 g(r) J0(s r) r dr
        val, _ = integrate.quad(lambda r: b.lens(r) * special.j0(s * r) * r, 0, 2, epsabs=1e-12, limit=200)
        assert 2 * math.pi * val == pytest.approx(b.radial_ft_sq(s), abs=1e-4)


def test_covariogram_fourier_duality_cube():
    c = Cube(2, 1.0)
    rng = np.random.default_rng(6)
    for y in rng.uniform(-10, 10, (5, 2)):
        # product of 1-d transforms of the triangle function
        tri = [integrate.quad(lambda x: (1 - abs(x)) * math.cos(yi * x), -1, 1, points=[0])[0] for yi in y]
        assert np.prod(tri) == pytest.approx(abs(c.indicator_ft(y)) ** 2, abs=1e-8)


def test_decay_classification():
    s = np.geomspace(1e2, 1e4, 4000)
    ball = s * np.abs(Ball(2, 1).indicator_ft(np.column_stack([s, 0 * s])))
    blocks = [ball[i:i + 400].max() for i in range(0, 4000, 400)]
    assert all(b2 < b1 for b1, b2 in zip(blocks, blocks[1:]))
    cube = s * np.abs(Cube(2, 1).indicator_ft(np.column_stack([s, 0 * s])))
    cblocks = [cube[i:i + 400].max() for i in range(0, 4000, 400)]
    assert not all(b2 < b1 for b1, b2 in zip(cblocks, cblocks[1:]))


def test_grid_exact_tiling():
    pts, w = grid(Cube(2, 1), 2, 1)
    assert len(pts) == 4 and w * len(pts) == 4.0


def test_grid_ball_area():
    pts, w = grid(Ball(2, 1), 10, 0.25)
    assert abs(w * len(pts) / (100 * math.pi) - 1) < 0.01


def test_grid_degenerate_and_cap():
    pts, _ = grid(Ball(2, 1), 1, 2)
    assert len(pts) <= 1
    with pytest.raises(GridTooLargeError, match="increase h"):
        grid(Ball(2, 1), 1000, 0.01)
    with pytest.raises(ValueError):
        grid(Ball(2, 1), 1, 0)


def test_grid_relative_boundary_error_shrinks():
    errs = [abs(len(grid(Ball(2, 1), t, 0.5)[0]) * 0.25 / (math.pi * t * t) - 1) for t in (8, 32, 128)]
    assert errs[2] < errs[0]


def test_cube_radial_covariogram_closed_form():
    # spherical average of (1 - |r cos|)(1 - |r sin|) for r <= 1
    r = np.array([0.0, 0.3, 0.8])
    assert np.allclose(Cube(2, 1).radial_covariogram(r), 1 - 4 * r / math.pi + r * r / math.pi, atol=1e-5)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_sphere_rule_weights(d):
    dirs, w = sphere_rule(d)
    assert w.sum() == pytest.approx(1.0)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)


@pytest.mark.parametrize("did, cls", [("ball:2,1", Ball), ("cube:3,2", Cube)])
def test_resolve(did, cls):
    assert isinstance(resolve_domain(did), cls)


@pytest.mark.parametrize("bad", ["ball:2", "disk:2,1", "ball:2,-1", "cube:0,1"])
def test_resolve_rejects(bad):
    with pytest.raises(ValueError):
        resolve_domain(bad)
