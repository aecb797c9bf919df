"""Jost engine: raw-ODE oracle, conserved quantities, frozen values."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from wkb_disperse import potential as pot
from wkb_disperse.jost import (JostEngine, ScatteringData, gauge_phase,
                               gauge_phase_left_limit, matrix_b, modulation,
                               modulation_slope, reflect_model,
                               scattering_data)

COULOMB = pot.coulomb_symmetric(c=1.0, mu=1.0)
BUMP = pot.bump(c=1.0, mu=1.0, bump_height=3.0, r0=2.0)
ANISO = pot.anisotropic(c_left=2.0, c_right=1.0, blend_width=1.0, mu=1.0)


def raw_trajectory_error(model, lam, sol, i_from, i_to):
    """Re-integrate u'' = (V - l^2) u from one engine sample to others.

    This is the independent correctness oracle: it shares nothing with
    the engine but the initial data, so frame or modulation errors that
    conserved quantities cannot see show up here.
    """
    def rhs(x, z):
        return [z[1], (pot.eval_potential(model, x) - lam * lam) * z[0]]

    ref = solve_ivp(rhs, (sol.x[i_from], sol.x[i_to]),
                    np.array([sol.u[i_from], sol.du[i_from]], dtype=complex),
                    dense_output=True, rtol=1e-11, atol=1e-12, method="DOP853")
    lo, hi = sorted((i_from, i_to))
    err = 0.0
    for i in range(lo, hi + 1):
        err = max(err, abs(ref.sol(sol.x[i])[0] - sol.u[i])
                  / max(abs(sol.u[i]), 1.0))
    return err


# -- modulation potential -------------------------------------------------

def test_modulation_frozen_value_at_origin():
    # V(0) = -1, V'(0) = 0, V''(0) = 1, q = 2: W = -1/(4*4) = -1/16
    assert modulation(COULOMB, 0.0, 1.0) == pytest.approx(-1.0 / 16.0, abs=1e-15)


def test_modulation_matches_normal_form_coefficient():
    # independent route: W = -mu^3 mu'' with mu = q^(-1/4), via FD in x
    model = pot.coulomb_symmetric(c=1.7, mu=0.6)
    lam = 0.9
    for x in (0.3, 2.0, -11.0):
        h = 1e-4 * max(1.0, abs(x))
        mu = lambda s: (lam ** 2 - pot.eval_potential(model, s)) ** -0.25
        mupp = (mu(x + h) - 2.0 * mu(x) + mu(x - h)) / h ** 2
        want = -mu(x) ** 3 * mupp
        assert modulation(model, x, lam) == pytest.approx(want, rel=2e-6)


def test_modulation_slope_is_x_derivative_over_local_wavenumber():
    model = pot.anisotropic(c_left=1.5, c_right=0.8, blend_width=2.0, mu=1.2)
    lam = 0.8
    for x in (-6.0, 0.7, 14.0):
        h = 1e-5 * max(1.0, abs(x))
        fd = (modulation(model, x + h, lam) - modulation(model, x - h, lam)) / (2 * h)
        q = lam ** 2 - pot.eval_potential(model, x)
        assert modulation_slope(model, x, lam) == pytest.approx(
            fd / np.sqrt(q), rel=1e-6)


def test_modulation_decays_two_powers_in_phase():
    # |W| <y>^2 stays bounded even though V only decays like <x>^(-mu)
    from wkb_disperse.liouville import LiouvilleMap
    lmap = LiouvilleMap(pot.coulomb_symmetric(c=1.0, mu=0.5))
    xs = np.geomspace(1.0, 1e5, 40)
    for lam in (0.1, 1.0):
        ys = lmap.forward(xs, np.full_like(xs, lam))
        vals = np.abs(modulation(pot.coulomb_symmetric(c=1.0, mu=0.5), xs, lam))
        assert np.max(vals * (1.0 + ys ** 2)) < 50.0


# -- oscillator-frame coupling matrix -------------------------------------

def test_matrix_b_frozen_values():
    np.testing.assert_allclose(matrix_b(0.0, 0.3),
                               [[0.0, 0.0], [0.3, 0.0]], atol=1e-15)
    np.testing.assert_allclose(matrix_b(np.pi / 4.0, 1.0),
                               [[-0.5, -0.5], [0.5, 0.5]], atol=1e-15)


def test_matrix_b_norm_and_trace():
    for y, w in [(0.7, 0.2), (-3.0, -1.1), (12.0, 0.01)]:
        b = matrix_b(y, w)
        assert np.linalg.norm(b, 2) == pytest.approx(abs(w), rel=1e-12)
        assert abs(np.trace(b)) < 1e-14


# -- gauge phase ----------------------------------------------------------

def test_gauge_phase_slope():
    # theta(x) = (1/2) int_{y(x)}^inf W dy, so d theta/dx = -W sqrt(q)/2
    model = pot.coulomb_symmetric(c=1.3, mu=0.8)
    lam = 1.1
    for x in (2.0, 7.0, 30.0):
        h = 1e-5 * max(1.0, abs(x))
        fd = (gauge_phase(model, x + h, lam) - gauge_phase(model, x - h, lam)) / (2 * h)
        q = lam ** 2 - pot.eval_potential(model, x)
        assert fd == pytest.approx(-0.5 * modulation(model, x, lam) * np.sqrt(q),
                                   rel=1e-5)


def test_gauge_phase_left_limit_is_whole_line_integral():
    from scipy.integrate import quad
    model = ANISO
    lam = 0.9
    got = gauge_phase_left_limit(model, lam)
    # independent reference: (1/2) int_R W dy = (1/2) int_R W sqrt(q) dx by
    # adaptive quadrature, folded onto the positive axis side by side
    total = 0.0
    for m in (model, reflect_model(model)):
        f = lambda x: (modulation(m, x, lam)
                       * np.sqrt(lam ** 2 - pot.eval_potential(m, x)))
        for a, b in [(0.0, 10.0), (10.0, 1e3), (1e3, 1e6), (1e6, 1e9)]:
            total += 0.5 * quad(f, a, b, limit=400, epsrel=1e-13)[0]
    assert got == pytest.approx(total, rel=1e-9)
    # and the split form through the gauge phase at the origin agrees:
    # boundary terms at x = 0 cancel between the model and its reflection
    alt = gauge_phase(model, 0.0, lam) + gauge_phase(reflect_model(model), 0.0, lam)
    assert got == pytest.approx(alt, rel=1e-12)


# -- the engine against the raw oscillator --------------------------------

def test_constant_model_is_exact():
    engine = JostEngine(pot.constant(2.0), 1.0, tol=1e-10)
    sol = engine.solve(np.linspace(-10.0, 10.0, 21))
    k = np.sqrt(3.0)
    want = np.exp(1j * k * sol.x) / np.sqrt(k)
    scale = sol.u[10] / want[10]
    assert abs(scale - 1.0) < 1e-12    # anchored at the origin, no free phase
    assert np.max(np.abs(sol.u - want)) < 1e-12
    assert sol.flux_defect() < 1e-13
    assert sol.far_out == pytest.approx(1.0, abs=1e-13)
    assert abs(sol.far_in) < 1e-13


@pytest.mark.parametrize("model,lam", [
    (COULOMB, 1.0),
    (COULOMB, 0.3),
    (pot.coulomb_symmetric(c=1.0, mu=0.5), 0.05),
    (pot.coulomb_symmetric(c=2.0, mu=1.5), 0.7),
    (ANISO, 0.8),
    (BUMP, 2.5),
])
def test_engine_tracks_raw_oscillator_global(model, lam):
    engine = JostEngine(model, lam, tol=1e-8)
    sol = engine.solve(np.linspace(-5.0, 5.0, 11))
    assert sol.mode == "global"
    assert raw_trajectory_error(model, lam, sol, 10, 0) < 1e-7
    assert sol.flux_defect() < 1e-7


def test_engine_tracks_raw_oscillator_across_barrier():
    # bridge mode: the forbidden core is crossed by direct integration,
    # the tails by amplitude transport; the seam must be invisible
    engine = JostEngine(BUMP, 0.6, tol=1e-8)
    sol = engine.solve(np.linspace(-5.0, 5.0, 11))
    assert sol.mode == "bridge"
    assert raw_trajectory_error(BUMP, 0.6, sol, 10, 0) < 1e-7
    assert sol.flux_defect() < 1e-7


def test_left_tail_is_superposition_of_frozen_waves():
    # far coefficients must reproduce u itself far out on the left
    model, lam = COULOMB, 0.9
    engine = JostEngine(model, lam, tol=1e-8)
    xs = np.array([-3000.0, -2000.0, 0.0])
    sol = engine.solve(xs)
    q = lam ** 2 - pot.eval_potential(model, xs[:2])
    recon = (sol.coeff_out[:2] * np.exp(1j * sol.y[:2])
             + sol.coeff_in[:2] * np.exp(-1j * sol.y[:2])) * q ** -0.25
    np.testing.assert_allclose(recon, sol.u[:2], rtol=1e-9)
    # and the coefficients themselves must have converged to the limits
    assert abs(sol.coeff_out[0] - sol.far_out) < 1e-5
    assert abs(sol.coeff_in[0] - sol.far_in) < 1e-5


def test_minus_direction_solves_same_equation():
    engine = JostEngine(ANISO, 0.8, tol=1e-8)
    sol = engine.solve(np.linspace(-5.0, 5.0, 11), direction=-1)
    assert raw_trajectory_error(ANISO, 0.8, sol, 0, 10) < 1e-7
    # normalized at -inf: left tail is pure e^{-iy}/q^(1/4)
    far = engine.solve(np.array([-4000.0]), direction=-1)
    q = 0.8 ** 2 - pot.eval_potential(ANISO, -4000.0)
    assert abs(far.u[0] - q ** -0.25 * np.exp(-1j * far.y[0])) < 1e-5


# -- conserved quantities and scattering ----------------------------------

@pytest.mark.parametrize("model", [COULOMB, ANISO, BUMP])
def test_wronskian_floor_and_unitarity(model):
    for lam in (0.2, 0.8, 2.0):
        sd = scattering_data(model, lam, tol=1e-8)
        assert isinstance(sd, ScatteringData)
        assert abs(sd.wronskian) >= 2.0 - 1e-6
        assert sd.wronskian_spread < 1e-6 * max(abs(sd.wronskian), 1.0)
        assert sd.det_defect < 1e-6
        assert sd.unitarity_defect < 1e-6
        assert sd.gauge_defect < 1e-6


def test_transfer_and_s_matrix_shapes():
    sd = scattering_data(COULOMB, 1.0)
    t = sd.transfer
    assert t[0, 0] == np.conj(t[1, 1]) and t[0, 1] == np.conj(t[1, 0])
    s = sd.s_matrix
    np.testing.assert_allclose(s @ s.conj().T, np.eye(2), atol=1e-8)
    assert np.linalg.det(t) == pytest.approx(1.0, abs=1e-8)


def test_even_model_shortcut_matches_two_solves():
    # the evenness shortcut must agree with an honest minus-direction solve
    lam = 0.7
    sd = scattering_data(COULOMB, lam, tol=1e-9)
    engine = JostEngine(COULOMB, lam, tol=1e-9)
    probes = np.linspace(-4.0, 4.0, 7)
    plus = engine.solve(probes, direction=1)
    minus = engine.solve(probes, direction=-1)
    wr = plus.u * minus.du - plus.du * minus.u
    assert np.mean(wr) == pytest.approx(sd.wronskian, rel=1e-9)


def test_tail_error_is_honest():
    # a loose engine and a tight engine must agree within the loose bound
    for model, lam in [(COULOMB, 0.5), (ANISO, 1.2)]:
        loose = JostEngine(model, lam, tol=1e-6).solve(np.array([0.0]))
        tight = JostEngine(model, lam, tol=1e-10).solve(np.array([0.0]))
        gap = abs(loose.far_out - tight.far_out) + abs(loose.far_in - tight.far_in)
        assert gap <= loose.tail_error + tight.tail_error
        assert tight.tail_error < loose.tail_error


def test_wavenumber_must_be_positive():
    with pytest.raises(ValueError):
        JostEngine(COULOMB, 0.0)
    with pytest.raises(ValueError):
        JostEngine(COULOMB, -1.0)


def test_direction_must_be_unit():
    with pytest.raises(ValueError):
        JostEngine(COULOMB, 1.0).solve(np.array([0.0]), direction=2)
