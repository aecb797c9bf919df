"""Discrete oracle: box spectrum formula, projector algebra, horizons."""

import numpy as np
import pytest

from wkb_disperse import potential as pot
from wkb_disperse.errors import (BroadeningTooNarrow, HorizonExceeded,
                                 ResourceLimit)
from wkb_disperse.oracle import (DiscreteOracle, density_ref,
                                 discretize_and_solve, propagator_ref)

COULOMB = pot.coulomb_symmetric(c=1.0, mu=1.0)


@pytest.fixture(scope="module")
def small_box():
    return discretize_and_solve(COULOMB, half_width=50.0, spacing=0.1,
                                lambda2_store=18.0)


@pytest.fixture(scope="module")
def big_box():
    return discretize_and_solve(COULOMB, half_width=200.0, spacing=0.05)


def test_constant_model_matches_box_formula():
    # V = -c shifts the textbook Dirichlet tridiagonal spectrum by -c
    c, hw, h = 1.0, 50.0, 0.1
    orc = discretize_and_solve(pot.constant(c), half_width=hw, spacing=h,
                               lambda2_store=10.0)
    n = len(orc.grid)
    k = np.arange(1, len(orc.eigenvalues) + 1)
    want = (2.0 / h ** 2) * (1.0 - np.cos(k * np.pi / (n + 1))) - c
    np.testing.assert_allclose(orc.eigenvalues, want, atol=1e-10)


def test_eigenpairs_ascending_orthonormal(small_box):
    vals = small_box.eigenvalues
    assert np.all(np.diff(vals) > 0)
    take = np.linspace(0, small_box.vectors.shape[1] - 1, 25).astype(int)
    sub = small_box.vectors[:, take]
    gram = sub.T @ sub * small_box.spacing
    np.testing.assert_allclose(gram, np.eye(25), atol=1e-8)


def test_negative_spectrum_exists_and_grows_with_box(small_box):
    assert small_box.n_negative > 0
    assert small_box.eigenvalues[0] < 0
    bigger = discretize_and_solve(COULOMB, half_width=100.0, spacing=0.1,
                                  lambda2_store=18.0)
    assert bigger.n_negative > small_box.n_negative


def test_level_spacing_scales_inversely_with_box(small_box):
    bigger = discretize_and_solve(COULOMB, half_width=100.0, spacing=0.1,
                                  lambda2_store=18.0)
    def spacing_near_one(orc):
        vals = orc.eigenvalues[np.abs(orc.eigenvalues - 1.0) < 0.5]
        return float(np.mean(np.diff(vals)))
    ratio = spacing_near_one(small_box) / spacing_near_one(bigger)
    assert ratio == pytest.approx(2.0, rel=0.15)


def test_projector_idempotent_at_t_zero(small_box):
    xs = small_box.grid
    xg, xpg = np.meshgrid(xs[::10], xs[::10], indexing="ij")
    q = propagator_ref(small_box, 0.0, xg.ravel(), xpg.ravel())
    n = len(xs[::10])
    q = q.reshape(n, n).real
    # Q h Q = Q needs the full grid as intermediate points
    full = propagator_ref(small_box, 0.0,
                          np.repeat(xs[::10], len(xs)), np.tile(xs, n))
    full = full.reshape(n, len(xs)).real
    q2 = full @ full.T * small_box.spacing
    # compare on the subgrid (full @ full.T restricted is exactly Q h Q)
    np.testing.assert_allclose(q2, q, atol=1e-6)


def test_propagation_unitary_on_ac_subspace(small_box):
    rng = np.random.default_rng(2)
    f = rng.standard_normal(len(small_box.grid))
    keep = (small_box.eigenvalues > 10.0 * small_box.spacing ** 2) \
        & (small_box.eigenvalues <= 16.0)
    coeff = small_box.vectors[:, keep].T @ f * small_box.spacing
    norm0 = np.sqrt(np.sum(coeff ** 2))
    evolved = np.exp(-1j * 2.0 * small_box.eigenvalues[keep]) * coeff
    assert np.sqrt(np.sum(np.abs(evolved) ** 2)) == pytest.approx(
        norm0, rel=1e-12)
    # and through the kernel route on a probe point
    probe = propagator_ref(small_box, 2.0, np.full(len(small_box.grid), 1.0),
                           small_box.grid)
    got = np.sum(probe * f) * small_box.spacing
    want = small_box.vectors[_idx(small_box, 1.0), keep] @ evolved
    assert got == pytest.approx(want, rel=1e-10)


def _idx(orc, x):
    return int(np.argmin(np.abs(orc.grid - x)))


def test_halving_h_is_converged_within_one_percent():
    # low-energy window, where the 3-point stencil dispersion is resolved
    coarse = discretize_and_solve(COULOMB, half_width=50.0, spacing=0.1,
                                  lambda2_store=4.0)
    fine = discretize_and_solve(COULOMB, half_width=50.0, spacing=0.05,
                                lambda2_store=4.0)
    xs = np.linspace(-5.0, 5.0, 11)
    xg, xpg = np.meshgrid(xs, xs, indexing="ij")
    # shared window: the near-zero exclusion scales with h and must not
    # move between the two resolutions being compared
    a = propagator_ref(coarse, 1.0, xg.ravel(), xpg.ravel(),
                       lambda2_max=2.0, lambda2_min=0.15)
    b = propagator_ref(fine, 1.0, xg.ravel(), xpg.ravel(),
                       lambda2_max=2.0, lambda2_min=0.15)
    assert np.max(np.abs(a - b)) < 0.01 * np.max(np.abs(b))


def test_horizon_enforced(small_box):
    horizon = small_box.half_width / 16.0
    with pytest.raises(HorizonExceeded):
        propagator_ref(small_box, horizon + 0.1, 0.0, 0.0)
    val = propagator_ref(small_box, horizon - 0.1, 0.0, 0.0)
    assert np.isfinite(val.real) and np.isfinite(val.imag)


def test_resource_limits():
    with pytest.raises(ResourceLimit):
        discretize_and_solve(COULOMB, half_width=60.0, spacing=0.1,
                             max_nodes=500)
    with pytest.raises(ResourceLimit):
        discretize_and_solve(COULOMB, half_width=60.0, spacing=0.1,
                             max_vector_bytes=1e4)
    with pytest.raises(ValueError):
        discretize_and_solve(COULOMB, half_width=10.0, spacing=0.1)
    with pytest.raises(ValueError):
        discretize_and_solve(COULOMB, half_width=60.0, spacing=0.5)


def test_density_ref_matches_constant_closed_form():
    c = 1.0
    orc = discretize_and_solve(pot.constant(c), half_width=100.0, spacing=0.1,
                               lambda2_store=6.0)
    lam = 0.8
    k = np.sqrt(lam ** 2 + c)
    for x, xp in [(0.0, 0.0), (2.0, -1.0)]:
        want = lam / (np.pi * k) * np.cos(k * (x - xp))
        got = density_ref(orc, lam, eta=0.12, x=x, xp=xp)
        assert got == pytest.approx(want, rel=0.05)


def test_density_ref_matches_jost_density(big_box):
    from wkb_disperse.spectral import SpectralDensityEvaluator
    for lam in (0.3, 0.7, 1.5):
        ev = SpectralDensityEvaluator(COULOMB, lam)
        # five level spacings: wide enough to smooth, narrow enough to
        # keep the Gaussian mass clear of the near-zero exclusion band
        eta = 5.0 * lam * np.pi / big_box.half_width
        for x, xp in [(0.0, 0.0), (1.0, -2.0)]:
            got = density_ref(big_box, lam, eta, x, xp)
            want = ev.density(x, xp)
            assert got == pytest.approx(want, rel=0.05, abs=1e-3)


def test_broadening_gate(small_box):
    with pytest.raises(BroadeningTooNarrow):
        density_ref(small_box, 1.0, 1e-4, 0.0, 0.0)


def test_points_must_be_inside_box(small_box):
    with pytest.raises(ValueError):
        propagator_ref(small_box, 0.0, 55.0, 0.0)


def test_oracle_is_frozen(small_box):
    assert isinstance(small_box, DiscreteOracle)
    with pytest.raises(Exception):
        small_box.spacing = 0.2
