"""Cutoff, phase derivatives, regime split, validated I(a), lemma sweeps."""

import dataclasses

import numpy as np
import pytest

from wkb_disperse import oscillatory as osc
from wkb_disperse import potential as pot
from wkb_disperse.errors import HypothesisViolated, NoConvergence, TurningPoint
from wkb_disperse.oscillatory import (
    Amplitude,
    CUTOFF_HALFWAY,
    LemmaCase,
    amplitude_norms,
    as_amplitude,
    cubic_degenerate_family,
    decay_exponent,
    flat_degenerate_family,
    integrate_oscillatory,
    lemma_bound_check,
    model_phase,
    phase_derivatives,
    quadratic_stationary_family,
    regime_classify,
    smooth_cutoff,
    smooth_cutoff_slope,
    split_partition,
    synthetic_phase,
)

CHI = Amplitude(smooth_cutoff, smooth_cutoff_slope)


def zero_phase():
    return synthetic_phase(
        phase=lambda l: np.zeros_like(np.asarray(l, dtype=float)),
        dphase=lambda l: np.zeros_like(np.asarray(l, dtype=float)),
        d2phase=lambda l: np.zeros_like(np.asarray(l, dtype=float)))


def fresnel_phase(t):
    return synthetic_phase(
        phase=lambda l: -t * np.asarray(l, dtype=float) ** 2,
        dphase=lambda l: -2.0 * t * np.asarray(l, dtype=float),
        d2phase=lambda l: -2.0 * t * np.ones_like(np.asarray(l, dtype=float)),
        t=t)


# ----------------------------------------------------------------------
# cutoff
# ----------------------------------------------------------------------

def test_cutoff_plateau_support_and_frozen_midpoint():
    assert smooth_cutoff(0.0) == 1.0
    assert smooth_cutoff(1.0) == 1.0
    assert smooth_cutoff(2.0) == 0.0
    assert smooth_cutoff(3.0) == 0.0
    # regression constant: every fitted constant in the package assumes
    # this exact transition profile
    assert smooth_cutoff(1.5) == CUTOFF_HALFWAY == 0.5
    assert smooth_cutoff(-1.5) == 0.5
    vals = smooth_cutoff(np.linspace(1.0, 2.0, 1001))
    assert np.all(np.diff(vals) <= 1e-15)
    assert np.all((vals >= 0.0) & (vals <= 1.0))


def test_cutoff_slope_closed_form_matches_differences():
    for s in [1.2, 1.35, 1.5, 1.65, 1.8]:
        h = 1e-7
        fd = (smooth_cutoff(s + h) - smooth_cutoff(s - h)) / (2 * h)
        assert smooth_cutoff_slope(s) == pytest.approx(fd, rel=1e-5)
    # even cutoff, odd slope
    assert smooth_cutoff_slope(-1.3) == pytest.approx(
        -smooth_cutoff_slope(1.3), rel=1e-14)
    assert smooth_cutoff_slope(0.5) == 0.0
    assert smooth_cutoff_slope(2.5) == 0.0
    # no overflow right at the band edges
    assert np.isfinite(smooth_cutoff_slope(np.nextafter(1.0, 2.0)))
    assert np.isfinite(smooth_cutoff_slope(np.nextafter(2.0, 1.0)))


def test_as_amplitude_difference_slope():
    amp = as_amplitude(lambda l: np.sin(np.asarray(l, dtype=float)))
    assert amp.slope(1.0) == pytest.approx(np.cos(1.0), rel=1e-6)
    assert amp(np.array([0.5, 1.0])).shape == (2,)


def test_partition_identity_and_uniform_norms():
    # a vanishing linearly at 0 keeps both norm forms finite
    def value(l):
        la = np.asarray(l, dtype=float)
        return la * smooth_cutoff(la)

    def slope(l):
        la = np.asarray(l, dtype=float)
        return smooth_cutoff(la) + la * smooth_cutoff_slope(la)

    a = Amplitude(value, slope)
    grid = np.linspace(1e-6, 2.5, 700)
    base = {form: sum(amplitude_norms(a, (0.0, 2.0), form))
            for form in ("stationary", "degenerate")}
    fitted = {form: [] for form in base}
    for big_m in (1.0, 10.0, 100.0):
        a1, a2 = split_partition(a, big_m)
        total = a1.value(grid) + a2.value(grid)
        assert np.max(np.abs(total - a.value(grid))) < 1e-14
        total_s = a1.slope(grid) + a2.slope(grid)
        assert np.max(np.abs(total_s - a.slope(grid))) < 1e-12
        for form in base:
            lhs = (sum(amplitude_norms(a1, (0.0, 2.0), form))
                   + sum(amplitude_norms(a2, (0.0, 2.0), form)))
            fitted[form].append(lhs / base[form])
    for form, cs in fitted.items():
        # the partition constant depends only on the cutoff, not on M
        assert max(cs) < 8.0
        assert max(cs) / min(cs) < 2.0


def test_split_partition_rejects_bad_scale():
    with pytest.raises(ValueError):
        split_partition(CHI, 0.0)


def test_amplitude_norms_rejects_unknown_form():
    with pytest.raises(ValueError):
        amplitude_norms(CHI, (0.0, 2.0), form="huh")


# ----------------------------------------------------------------------
# phases
# ----------------------------------------------------------------------

def test_constant_profile_closed_form_derivative():
    # V = -c: Phi' = -2 t l + (x - x') l / sqrt(l^2 + c)
    spec = model_phase(pot.constant(0.8), t=1.3, x=4.0, xp=-2.0)
    for lam in [0.1, 0.7, 2.2]:
        want = -2.0 * 1.3 * lam + 6.0 * lam / np.sqrt(lam ** 2 + 0.8)
        assert spec.dphase(lam) == pytest.approx(want, rel=1e-14)
    lams = np.array([0.3, 1.1])
    got = spec.phase(lams)
    want = -1.3 * lams ** 2 + 4.0 * np.sqrt(lams ** 2 + 0.8) \
        + 2.0 * np.sqrt(lams ** 2 + 0.8)
    assert np.allclose(got, want, rtol=1e-14)


def test_phase_derivative_chain_against_differences():
    model = pot.coulomb_symmetric(c=1.3, mu=0.9)
    spec = model_phase(model, t=0.8, x=7.0, xp=-2.0)
    rng = np.random.default_rng(5)
    lams = rng.uniform(0.2, 3.0, 100)
    h = 1e-5 * (1.0 + lams)
    fd1 = (spec.phase(lams + h) - spec.phase(lams - h)) / (2 * h)
    fd2 = (spec.dphase(lams + h) - spec.dphase(lams - h)) / (2 * h)
    fd3 = (spec.d2phase(lams + h) - spec.d2phase(lams - h)) / (2 * h)
    p0, p1, p2, p3 = phase_derivatives(spec, lams)
    assert np.max(np.abs(p1 - fd1) / (1.0 + np.abs(fd1))) < 1e-6
    assert np.max(np.abs(p2 - fd2) / (1.0 + np.abs(fd2))) < 1e-6
    assert np.max(np.abs(p3 - fd3) / (1.0 + np.abs(fd3))) < 1e-5
    assert isinstance(spec.phase(1.0), float)


def test_third_derivative_sign_on_diagonal_pair():
    # for x > x' and V < 0 the (+,-) phase has strictly concave slope
    spec = model_phase(pot.coulomb_symmetric(1.0, 1.0), t=2.0, x=5.0, xp=1.0)
    lams = np.geomspace(0.1, 5.0, 60)
    assert np.all(spec.d3phase(lams) < 0.0)


def test_offdiagonal_signs_differ_by_endpoint_phase():
    model = pot.coulomb_symmetric(1.0, 1.0)
    pp = model_phase(model, t=1.5, x=6.0, xp=2.0, signs=(1, 1))
    pm = model_phase(model, t=1.5, x=6.0, xp=2.0, signs=(1, -1))
    y_xp = model_phase(model, t=0.0, x=2.0, xp=0.0, signs=(1, -1))
    lams = np.array([0.2, 0.9, 3.0])
    assert np.allclose(pp.phase(lams) - pm.phase(lams),
                       2.0 * y_xp.phase(lams), rtol=1e-12)
    with pytest.raises(ValueError):
        model_phase(model, 1.0, 2.0, 1.0, signs=(1, 0))


def test_phase_derivatives_guards():
    spec = fresnel_phase(1.0)
    with pytest.raises(ValueError):
        phase_derivatives(spec, np.array([0.5, -1.0]))
    with pytest.raises(ValueError):
        phase_derivatives(spec, 1.0)  # no third derivative attached


def test_turning_point_blocks_phase_below_barrier():
    spec = model_phase(pot.bump(1.0, 1.0, bump_height=2.0, r0=2.0),
                       t=1.0, x=3.0, xp=0.0)
    with pytest.raises(TurningPoint):
        spec.dphase(0.5)
    assert np.isfinite(spec.dphase(1.5))


def test_low_energy_curvature_limit():
    # Phi''(0+) -> -2t + M_1, with M_1 from an independent trapezoid sum
    model = pot.coulomb_symmetric(1.0, 1.0)
    t = 0.7
    spec = model_phase(model, t=t, x=3.0, xp=1.0)
    s = np.linspace(1.0, 3.0, 400001)
    m1_ref = np.trapezoid(np.abs(pot.eval_potential(model, s)) ** -0.5, s)
    assert spec.d2phase(1e-4) + 2.0 * t == pytest.approx(m1_ref, rel=1e-6)


def test_low_energy_quartic_coefficient():
    # S(l) - S(0) = (M_1/2) l^2 - (M_2/8) l^4 + O(l^6)
    model = pot.coulomb_symmetric(1.0, 1.0)
    spec = model_phase(model, t=0.0, x=3.0, xp=0.0)
    s = np.linspace(0.0, 3.0, 400001)
    absv = np.abs(pot.eval_potential(model, s))
    m1 = np.trapezoid(absv ** -0.5, s)
    m2 = np.trapezoid(absv ** -1.5, s)
    lam = 0.02
    g = spec.phase(lam) - spec.phase(1e-300) - 0.5 * m1 * lam ** 2
    assert g / lam ** 4 == pytest.approx(-m2 / 8.0, rel=2e-3)


# ----------------------------------------------------------------------
# regimes
# ----------------------------------------------------------------------

def test_regime_flags_overlap_on_the_partition_band():
    model = pot.coulomb_symmetric(1.0, 1.0)
    spec = model_phase(model, t=1.0, x=100.0, xp=0.0)
    split = 2.0 * float(pot.bracket(100.0)) ** -0.5
    low = regime_classify(spec, 0.5 * split, radius=2.0)
    mid = regime_classify(spec, 2.0 * split, radius=2.0)
    high = regime_classify(spec, 3.0 * split, radius=2.0)
    assert low.lam_split == pytest.approx(split, rel=1e-12)
    assert (low.in_k1, low.in_k2) == (False, True)
    assert (mid.in_k1, mid.in_k2) == (True, True)  # factor-2 overlap band
    assert (high.in_k1, high.in_k2) == (True, False)
    assert low.label == "K2"
    assert high.label.startswith("K1_")


def test_regime_subregions_cover_high_energy_window():
    model = pot.coulomb_symmetric(1.0, 1.0)
    spec = model_phase(model, t=2.0, x=30.0, xp=10.0)
    for lam in np.geomspace(0.2, 40.0, 40):
        rep = regime_classify(spec, lam, radius=4.0)
        if rep.in_k1:
            assert rep.in_k11 or rep.in_k12 or rep.in_k13
        else:
            assert rep.label == "K2"


def test_regime_coincident_points_degenerate_to_k13():
    model = pot.coulomb_symmetric(1.0, 1.0)
    spec = model_phase(model, t=1.0, x=5.0, xp=5.0)
    rep = regime_classify(spec, 2.0, radius=1.0)
    assert rep.label == "K1_3"
    assert not rep.in_k11 and not rep.in_k12
    assert rep.m1 == 0.0 and rep.m2 == 0.0
    assert rep.m is None and rep.lam0 is None


def test_stationary_point_in_proved_bracket():
    # K_{1,2,R} case: the zero of Phi'/l sits in (d / 12t, d / t)
    model = pot.coulomb_symmetric(1.0, 1.0)
    t, x, xp = 5.0, 50.0, 0.0
    spec = model_phase(model, t=t, x=x, xp=xp)
    rep = regime_classify(spec, 4.0, radius=9.0)
    assert rep.in_k12
    assert rep.lam0 is not None
    d = x - xp
    assert d / (12.0 * t) < rep.lam0 < d / t
    assert abs(spec.dphase(rep.lam0)) < 1e-8


def test_low_energy_stationary_point_matches_cubic_parameter():
    model = pot.coulomb_symmetric(1.0, 1.0)
    probe = model_phase(model, t=1.0, x=100.0, xp=0.0)
    m1 = regime_classify(probe, 1.0, radius=1.0).m1
    s = np.linspace(0.0, 100.0, 400001)
    absv = np.abs(pot.eval_potential(model, s))
    assert m1 == pytest.approx(np.trapezoid(absv ** -0.5, s), rel=1e-6)

    t = 0.499 * m1
    spec = model_phase(model, t=t, x=100.0, xp=0.0)
    rep = regime_classify(spec, 0.005, radius=1.0)
    assert rep.in_k2 and not rep.in_k1
    assert rep.m2 == pytest.approx(np.trapezoid(absv ** -1.5, s), rel=1e-6)
    assert rep.m == pytest.approx(2.0 * (rep.m1 - 2.0 * t) / rep.m2, rel=1e-12)
    assert rep.m > 0.0
    # leading order of the small-lambda expansion: lam0 ~ sqrt(m)
    assert rep.lam0 == pytest.approx(np.sqrt(rep.m), rel=2e-2)
    assert rep.lam0 < rep.lam_split
    assert abs(spec.dphase(rep.lam0)) < 1e-8

    # past the threshold M_1 = 2t no zero exists and m goes negative
    late = model_phase(model, t=0.51 * m1, x=100.0, xp=0.0)
    rep2 = regime_classify(late, 0.005, radius=1.0)
    assert rep2.m < 0.0
    assert rep2.lam0 is None


def test_envelope_ratio_tracks_bracket_power():
    # M_2 / (<x>^mu M_1) stays in a fixed band as x sweeps three decades
    model = pot.coulomb_symmetric(1.0, 1.0)
    ratios = []
    for x in (10.0, 100.0, 1000.0):
        spec = model_phase(model, t=1.0, x=x, xp=0.0)
        rep = regime_classify(spec, 1.0, radius=1.0)
        ratios.append(rep.m2 / (float(pot.bracket(x)) ** 1.0 * rep.m1))
    assert all(0.25 < r < 4.0 for r in ratios)
    assert max(ratios) / min(ratios) < 1.5


def test_regime_classify_guards():
    model = pot.coulomb_symmetric(1.0, 1.0)
    with pytest.raises(ValueError):
        regime_classify(fresnel_phase(1.0), 1.0, 1.0)  # no model attached
    spec = model_phase(model, t=-1.0, x=5.0, xp=0.0)
    with pytest.raises(ValueError):
        regime_classify(spec, 1.0, 1.0)
    swapped = model_phase(model, t=1.0, x=1.0, xp=5.0)
    with pytest.raises(ValueError):
        regime_classify(swapped, 1.0, 1.0)
    good = model_phase(model, t=1.0, x=5.0, xp=0.0)
    with pytest.raises(ValueError):
        regime_classify(good, -2.0, 1.0)
    barrier = model_phase(pot.bump(1.0, 1.0, 2.0, 2.0), t=1.0, x=5.0, xp=0.0)
    with pytest.raises(ValueError):
        regime_classify(barrier, 2.0, 1.0)  # envelopes need V < 0


# ----------------------------------------------------------------------
# oscillatory integration
# ----------------------------------------------------------------------

def test_no_phase_reduces_to_plain_quadrature():
    gauss = as_amplitude(lambda l: np.exp(-0.5 * np.asarray(l, dtype=float) ** 2))
    val, err = integrate_oscillatory(gauss, zero_phase())
    assert val == pytest.approx(np.sqrt(np.pi / 2.0), abs=1e-9)
    assert err < 1e-9
    ones = as_amplitude(lambda l: np.ones_like(np.asarray(l, dtype=float)))
    val, _ = integrate_oscillatory(ones, zero_phase(), support=(0.0, 1.0))
    assert val == pytest.approx(1.0, abs=1e-11)


def test_fresnel_constant_is_stable_over_two_decades():
    # |I| sqrt(t) -> sqrt(pi) / 2 for a = chi, Phi = -t l^2
    scaled = []
    for t in (1e2, 1e3, 1e4):
        val, _ = integrate_oscillatory(CHI, fresnel_phase(t), tol=1e-9,
                                       check=False)
        scaled.append(abs(val) * np.sqrt(t))
    for s in scaled:
        assert s == pytest.approx(0.5 * np.sqrt(np.pi), rel=0.1)
    assert max(scaled) / min(scaled) < 1.15


def test_methods_agree_on_model_phase():
    spec = model_phase(pot.coulomb_symmetric(1.0, 1.0), t=2.0, x=5.0, xp=1.0)
    results = {}
    for method in ("brute", "damped_tail", "ibp_tail"):
        val, err = integrate_oscillatory(CHI, spec, method=method, tol=1e-8)
        results[method] = val
        assert err < 1e-4
    vals = list(results.values())
    assert abs(vals[0] - vals[1]) < 1e-7
    assert abs(vals[0] - vals[2]) < 1e-7


def test_tail_methods_handle_noncompact_amplitude():
    lorentz = as_amplitude(lambda l: 1.0 / (1.0 + np.asarray(l, dtype=float) ** 2))
    spec = fresnel_phase(1.0)
    # oscillation makes the truncated brute integral a trustworthy reference
    ref, _ = integrate_oscillatory(lorentz, spec, tol=1e-9,
                                   support=(0.0, 150.0), check=False)
    damped, derr = integrate_oscillatory(lorentz, spec, method="damped_tail",
                                         tol=1e-9, check=False)
    ibp, ierr = integrate_oscillatory(lorentz, spec, method="ibp_tail",
                                      tol=1e-9, check=False)
    assert abs(damped - ref) < 1e-5
    assert abs(ibp - ref) < 5e-4
    assert ierr < 5e-3


def test_linearity_within_stated_slack():
    tol = 1e-9
    spec = fresnel_phase(3.0)
    b = as_amplitude(lambda l: np.exp(-3.0 * (np.asarray(l, dtype=float) - 1.0) ** 2))

    def combo(l):
        return 2.0 * CHI.value(l) + 3.0j * b.value(l)

    i_chi, _ = integrate_oscillatory(CHI, spec, tol=tol, check=False)
    i_b, _ = integrate_oscillatory(b, spec, tol=tol, check=False)
    i_combo, _ = integrate_oscillatory(as_amplitude(combo), spec, tol=tol,
                                       check=False)
    assert abs(i_combo - (2.0 * i_chi + 3.0j * i_b)) < 10.0 * tol


def test_conjugation_symmetry():
    spec = model_phase(pot.coulomb_symmetric(1.0, 1.0), t=2.0, x=5.0, xp=1.0)
    flipped = synthetic_phase(
        phase=lambda l: -spec.phase(l),
        dphase=lambda l: -spec.dphase(l),
        d2phase=lambda l: -spec.d2phase(l))
    i_plus, _ = integrate_oscillatory(CHI, spec, tol=1e-10, check=False)
    i_minus, _ = integrate_oscillatory(CHI, flipped, tol=1e-10, check=False)
    assert i_minus == pytest.approx(np.conj(i_plus), abs=1e-10)


def test_integrator_guards():
    lorentz = as_amplitude(lambda l: 1.0 / (1.0 + np.asarray(l, dtype=float) ** 2))
    with pytest.raises(ValueError):
        integrate_oscillatory(CHI, fresnel_phase(1.0), method="magic")
    with pytest.raises(ValueError):
        integrate_oscillatory(CHI, fresnel_phase(1.0), support=(2.0, 1.0))
    with pytest.raises(ValueError):
        # no decay anywhere on the probe grid and no support given
        integrate_oscillatory(lorentz, fresnel_phase(1.0), method="brute")


def test_parts_tail_refuses_nonintegrable_remainder():
    grow = as_amplitude(lambda l: (1.0 + np.asarray(l, dtype=float)) ** 0.98)
    spec = synthetic_phase(
        phase=lambda l: np.asarray(l, dtype=float),
        dphase=lambda l: np.ones_like(np.asarray(l, dtype=float)),
        d2phase=lambda l: np.zeros_like(np.asarray(l, dtype=float)))
    with pytest.raises(NoConvergence):
        integrate_oscillatory(grow, spec, method="ibp_tail", check=False)


def test_cross_check_flags_disagreement(monkeypatch):
    monkeypatch.setattr(osc, "_damped_raw",
                        lambda *args, **kwargs: (123.0 + 0.0j, 0.0))
    with pytest.raises(NoConvergence):
        integrate_oscillatory(CHI, fresnel_phase(3.0), tol=1e-9)


# ----------------------------------------------------------------------
# lemma sweeps
# ----------------------------------------------------------------------

def test_stationary_lemma_constant_is_flat():
    table = lemma_bound_check(quadratic_stationary_family(0.5), "stationary",
                              sweep=(1e2, 1e3, 1e4))
    assert table.lemma == "stationary"
    assert not table.flagged
    assert table.drift_factor < 1.3
    for row in table.rows:
        # interior stationary point with unit-curvature scaling:
        # |I| sqrt(M) -> sqrt(2 pi)
        assert row.abs_i * np.sqrt(row.big_m) == pytest.approx(
            np.sqrt(2.0 * np.pi), rel=0.12)


@pytest.mark.parametrize("shift", [0.0, 1.0])
def test_degenerate_lemma_constant_is_flat(shift):
    table = lemma_bound_check(cubic_degenerate_family(shift), "degenerate",
                              sweep=(1e2, 1e3, 1e4))
    assert not table.flagged
    assert table.drift_factor < 1.4
    if shift == 0.0:
        for row in table.rows:
            # int_0^inf u exp(i u^4 / 4) du = int_0^inf exp(i w^2) dw
            assert row.abs_i * np.sqrt(row.big_m) == pytest.approx(
                0.5 * np.sqrt(np.pi), rel=0.1)


def test_unsaturated_family_is_flagged():
    # a fixed negative cubic parameter leaves no stationary point at any M,
    # so |I| ~ 1/M and the fitted constant drifts well past 2x per decade
    amp = Amplitude(
        lambda l: np.asarray(l, dtype=float) * smooth_cutoff(l),
        lambda l: smooth_cutoff(l)
        + np.asarray(l, dtype=float) * smooth_cutoff_slope(l))

    def family(big_m):
        return osc._cubic_case(amp, big_m, -0.25)

    table = lemma_bound_check(family, "degenerate", sweep=(1e2, 1e3, 1e4))
    assert table.flagged
    assert table.drift_factor > 2.5


def test_hypothesis_floor_is_enforced():
    base = quadratic_stationary_family(0.5)

    def inflated(big_m):
        return dataclasses.replace(base(big_m), c1=5.0)

    with pytest.raises(HypothesisViolated):
        lemma_bound_check(inflated, "stationary", sweep=(1e2,))
    with pytest.raises(ValueError):
        lemma_bound_check(base, "by-parts", sweep=(1e2,))


def test_away_from_zero_form_checks_support():
    ones = as_amplitude(lambda l: np.ones_like(np.asarray(l, dtype=float)))
    m, big_m = 20.0, 100.0
    spec = synthetic_phase(
        phase=lambda l: m * np.asarray(l, dtype=float),
        dphase=lambda l: m * np.ones_like(np.asarray(l, dtype=float)),
        d2phase=lambda l: np.zeros_like(np.asarray(l, dtype=float)))
    case = LemmaCase(amp=ones, spec=spec, big_m=big_m, m=m, c1=1.0, c2=1.0,
                     form="as1", support=(0.0, m / big_m))
    osc._verify_hypotheses(case, "stationary")
    wide = dataclasses.replace(case, support=(0.0, 3.0 * m / big_m))
    with pytest.raises(HypothesisViolated):
        osc._verify_hypotheses(wide, "stationary")


def test_flat_amplitude_halves_the_decay_rate():
    # without a = O(l) at the origin the quartic phase only buys M^(-1/4)
    p = decay_exponent(flat_degenerate_family(), sweep=(1e2, 1e3, 1e4))
    assert 0.2 < p < 0.3
