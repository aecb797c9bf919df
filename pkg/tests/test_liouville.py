"""Phase map: closed-form oracle, roundtrips, symbol derivative."""

import numpy as np
import pytest

from wkb_disperse import potential as pot
from wkb_disperse.errors import TurningPoint
from wkb_disperse.liouville import LiouvilleMap, symbol_derivative_gap


def test_constant_closed_forms():
    lmap = LiouvilleMap(pot.constant(1.0))
    assert lmap.forward(2.0, 1.0) == pytest.approx(2.0 * np.sqrt(2.0), abs=1e-15)
    assert lmap.inverse(3.0, 1.0) == pytest.approx(3.0 / np.sqrt(2.0), abs=1e-15)
    # dx/dl at fixed y = -y l (l^2+c)^(-3/2)
    x = lmap.inverse(3.0, 1.0)
    assert lmap.dx_dlam(x, 1.0) == pytest.approx(-3.0 * 2.0 ** -1.5, rel=1e-12)


def test_quadrature_matches_constant_closed_form():
    # run the generic panel path on V = -c by the paired integral itself
    lmap = LiouvilleMap(pot.constant(0.7))
    xs = np.array([-40.0, -3.2, -0.5, 0.4, 7.7, 55.0])
    lams = np.array([0.3, 1.0, 2.5, 0.11, 1.7, 3.9])
    got = lmap._paired_integral(xs, lams, 0.5)
    want = xs * np.sqrt(lams ** 2 + 0.7)
    assert np.max(np.abs(got - want) / (1 + np.abs(want))) < 1e-12


def test_coulomb_forward_against_dense_reference():
    # independent oracle: very fine trapezoid sums converge to the panels
    model = pot.coulomb_symmetric(c=1.0, mu=1.0)
    lmap = LiouvilleMap(model)
    for x, lam in [(3.0, 0.5), (-7.0, 1.3), (20.0, 0.05)]:
        s = np.linspace(0.0, x, 400001)
        q = lam ** 2 - pot.eval_potential(model, s)
        ref = np.trapezoid(np.sqrt(q), s)
        assert lmap.forward(x, lam) == pytest.approx(ref, rel=1e-9)


def test_forward_slope_is_local_wavenumber():
    model = pot.coulomb_symmetric(c=1.3, mu=0.8)
    lmap = LiouvilleMap(model)
    h = 1e-5
    for x, lam in [(1.7, 0.9), (-12.0, 0.2), (130.0, 2.0)]:
        fd = (lmap.forward(x + h, lam) - lmap.forward(x - h, lam)) / (2 * h)
        assert fd == pytest.approx(np.sqrt(lmap.momentum_sq(x, lam)), rel=1e-9)


@pytest.mark.parametrize("model", [
    pot.coulomb_symmetric(c=1.0, mu=1.0),
    pot.coulomb_symmetric(c=2.0, mu=1.5),
    pot.anisotropic(2.0, 1.0, blend_width=0.8, mu=1.0),
])
def test_roundtrip_random_pairs(model):
    lmap = LiouvilleMap(model)
    rng = np.random.default_rng(11)
    xs = rng.uniform(-1.0, 1.0, 200) * 10.0 ** rng.uniform(-1, 2.3, 200)
    lams = 10.0 ** rng.uniform(-2, np.log10(4.0), 200)
    ys = lmap.forward(xs, lams)
    back = lmap.inverse(ys, lams)
    assert np.max(np.abs(back - xs) / (1.0 + np.abs(xs))) < 1e-9


def test_anchor_shifts_zero():
    model = pot.coulomb_symmetric(c=1.0, mu=1.0)
    base = LiouvilleMap(model)
    off = LiouvilleMap(model, anchor=5.0)
    assert off.forward(5.0, 0.7) == 0.0
    # additivity of the path integral
    got = off.forward(9.0, 0.7)
    want = base.forward(9.0, 0.7) - base.forward(5.0, 0.7)
    assert got == pytest.approx(want, rel=1e-11)


def test_turning_point_raises():
    # the default barrier bump has V(0) = +1, so l < 1 paths through the
    # core hit a classical turning point
    model = pot.bump(c=1.0, mu=1.0, bump_height=2.0, r0=2.0)
    lmap = LiouvilleMap(model)
    with pytest.raises(TurningPoint):
        lmap.forward(3.0, 0.5)
    # and the anchor itself is classically forbidden for the inverse
    with pytest.raises(TurningPoint):
        lmap.inverse(1.0, 0.5)
    # while high l passes cleanly over the barrier
    assert np.isfinite(lmap.forward(3.0, 1.5))


def test_dy_dlam_matches_finite_difference():
    model = pot.coulomb_symmetric(c=1.0, mu=1.0)
    lmap = LiouvilleMap(model)
    h = 1e-6
    for x, lam in [(4.0, 1.1), (-30.0, 0.4)]:
        fd = (lmap.forward(x, lam + h) - lmap.forward(x, lam - h)) / (2 * h)
        assert lmap.dy_dlam(x, lam) == pytest.approx(fd, rel=1e-7)


def test_symbol_derivative_certificate():
    model = pot.coulomb_symmetric(c=1.0, mu=1.0)
    lmap = LiouvilleMap(model)
    ys = np.array([0.5, 2.0, 10.0, 80.0])
    assert symbol_derivative_gap(lmap, ys, lam=1.0) < 1e-5
    assert symbol_derivative_gap(lmap, ys, lam=0.3) < 1e-4


def test_shapes_and_scalars():
    lmap = LiouvilleMap(pot.coulomb_symmetric(c=1.0, mu=1.0))
    y = lmap.forward(2.0, 1.0)
    assert isinstance(y, float)
    arr = lmap.forward(np.array([[1.0, 2.0], [3.0, 4.0]]), 1.0)
    assert arr.shape == (2, 2)
    assert lmap.inverse(np.array([1.0, 2.0]), np.array([0.5, 2.0])).shape == (2,)
