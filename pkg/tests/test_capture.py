import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from autoreson.asymptotics import AsymptoticProfile, truncated_asymptote
from autoreson.capture import (
    PendulumParams,
    PointKind,
    Region,
    Thresholds,
    Verdict,
    asymptote_ic,
    brute_force_inside,
    capture_consistency,
    capture_field,
    capture_frame,
    capture_scan,
    classify_trajectory,
    disc_ics,
    energy_gap,
    inside_separatrix,
    pendulum_energy,
    pendulum_field,
    pendulum_fixed_points,
    pendulum_rhs,
    rhs_capture,
    separatrix_loop,
    separatrix_regions,
)
from autoreson.errors import DegeneratePolarError, DomainError, InsufficientDataError
from autoreson.integrator import IntegratorConfig, TrajectoryRecord, integrate
from autoreson.models import ForcingLaw, Frame, PolarConvention, polar_field, slow_field

PI = math.pi

# ------------------------------------------------------------------ capture frame


def test_capture_frame_lambda_zero():
    fr = capture_frame(0.1, 0.0)
    assert fr.delta == pytest.approx(0.1**1.5, rel=1e-15)
    assert fr.delta == pytest.approx(0.031623, abs=1e-6)
    assert fr.drive == pytest.approx(0.1, rel=1e-15)
    assert fr.valid


def test_capture_frame_boundary_flagged():
    fr = capture_frame(0.1, 0.75)
    assert fr.delta == 1.0
    assert not fr.valid


def test_capture_frame_quarter():
    fr = capture_frame(0.01, 0.25)
    assert fr.delta == pytest.approx(0.01, rel=1e-14)
    assert fr.drive == pytest.approx(1e-4, rel=1e-14)


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.5, 2.0])
def test_capture_frame_rejects_epsilon(eps):
    with pytest.raises(DomainError):
        capture_frame(eps, 0.0)


@given(st.floats(1e-4, 0.999), st.floats(-0.24, 0.74))
def test_delta_below_one_when_admissible(eps, lam):
    assert capture_frame(eps, lam).delta < 1.0


# ------------------------------------------------------------------ capture system


def test_rhs_capture_quarter_turn():
    fr = capture_frame(0.1, 0.0)
    drho, dalpha = rhs_capture(0.0, 0.0, PI / 2, fr, 1.0)
    assert drho == 1.0
    assert dalpha == pytest.approx(-fr.delta, rel=1e-15)


@pytest.mark.parametrize("alpha", [0.0, PI])
@pytest.mark.parametrize("F", [0.3, 1.0, 5.0])
def test_rhs_capture_no_torque_at_equilibrium_phase(alpha, F):
    drho, _ = rhs_capture(0.0, 0.0, alpha, capture_frame(0.1, 0.3), F)
    assert abs(drho) < 1e-15 * F


def test_rhs_capture_small_delta_limit():
    # delta -> 0 at lam = 0: rho' = F sin alpha, alpha' = 2 rho + eps s
    eps = 1e-8
    fr = capture_frame(eps, 0.0)
    for s, rho, alpha in [(3.0, 0.2, 1.1), (10.0, -0.4, 4.0)]:
        drho, dalpha = rhs_capture(s, rho, alpha, fr, 1.7)
        assert drho == pytest.approx(1.7 * math.sin(alpha), rel=1e-12)
        assert dalpha == pytest.approx(2 * rho + eps * s, abs=1e-11)


def test_rhs_capture_errors():
    fr = capture_frame(0.5, -0.2)  # delta D s = -1 reachable at negative s
    with pytest.raises(DomainError):
        rhs_capture(-1.0 / (fr.delta * fr.drive), 0.0, 1.0, fr, 1.0)
    with pytest.raises(DegeneratePolarError):
        rhs_capture(0.0, -1.0 / fr.delta, 1.0, fr, 1.0)


def test_capture_field_matches_scalar():
    fr = capture_frame(0.05, 0.1)
    f = capture_field(fr, 1.3)
    for s, rho, alpha in [(0.0, 0.0, 1.0), (7.0, 0.3, -2.0), (50.0, -0.2, 3.5)]:
        assert np.allclose(f(s, np.array([rho, alpha])), rhs_capture(s, rho, alpha, fr, 1.3), rtol=1e-14, atol=0)


# ------------------------------------------------------------------ pendulum


def test_pendulum_rhs_examples():
    assert pendulum_rhs(PI, 0.0, PendulumParams(1.0, 0.0)) == (0.0, pytest.approx(0.0, abs=1e-15))
    assert pendulum_rhs(PI / 2, 0.0, PendulumParams(1.0, 0.1))[1] == pytest.approx(1.1, rel=1e-15)
    assert pendulum_rhs(0.0, 0.0, PendulumParams(1.0, 0.0)) == (0.0, 0.0)


def test_pendulum_energy_examples():
    p = PendulumParams(1.0, 0.0)
    assert pendulum_energy(PI, 0.0, p) == -1.0
    assert pendulum_energy(0.0, 0.0, p) == 1.0


def test_pendulum_params_validation():
    with pytest.raises(DomainError):
        PendulumParams(0.0, 0.1)
    with pytest.raises(DomainError):
        PendulumParams(1.0, math.inf)


def test_pendulum_from_frame():
    fr = capture_frame(0.05, 0.0)
    assert PendulumParams.from_frame(fr, 1.5) == PendulumParams(3.0, fr.drive)
    assert PendulumParams.from_frame(fr, 1.5, literal=True) == PendulumParams(1.5, fr.drive)


def pendulum_energy_drift(Fp, D, a0, ad0, rtol, span=1e3):
    params = PendulumParams(Fp, D)
    s = np.linspace(0.0, span, 5001)
    tr = integrate(pendulum_field(params), [a0, ad0], (0.0, span), IntegratorConfig(rtol=rtol, atol=rtol / 100), s)
    E = pendulum_energy(tr.y[:, 0], tr.y[:, 1], params)
    return np.max(np.abs(E - E[0]))


def test_energy_conservation_tight_tolerance():
    assert pendulum_energy_drift(1.0, 0.0, PI + 1.0, 0.0, 1e-11) < 1e-8


@pytest.mark.xfail(strict=True, reason="at rtol=1e-10 the drift over 1e3 time units is ~3e-8")
def test_energy_conservation_at_rtol_1e10():
    assert pendulum_energy_drift(1.0, 0.0, PI + 1.0, 0.0, 1e-10) < 1e-8


def _energy_draws(rtol):
    rng = np.random.default_rng(7)
    drifts = []
    while len(drifts) < 20:
        Fp = rng.uniform(0.2, 3.0)
        D = rng.uniform(-0.9, 0.9) * Fp
        params = PendulumParams(Fp, D)
        a0, ad0 = rng.uniform(0, 2 * PI), rng.uniform(-2, 2) * math.sqrt(Fp)
        # bounded orbits only: rotating orbits under torque accelerate without bound
        if inside_separatrix(a0, ad0, params) is not Region.INSIDE:
            continue
        drifts.append(pendulum_energy_drift(Fp, D, a0, ad0, rtol))
    return np.array(drifts)


def test_energy_conservation_random_draws():
    assert np.all(_energy_draws(1e-12) < 1e-8)


@pytest.mark.xfail(strict=True, reason="at rtol=1e-10 the drift over 1e3 time units reaches a few 1e-8")
def test_energy_conservation_random_draws_at_rtol_1e10():
    assert np.all(_energy_draws(1e-10) < 1e-8)


# ------------------------------------------------------------------ fixed points and separatrix


def test_fixed_points_no_torque():
    pts = pendulum_fixed_points(PendulumParams(1.0, 0.0))
    assert [k for _, k in pts] == [PointKind.SADDLE, PointKind.CENTER]
    assert pts[0][0] == 0.0 and pts[1][0] == pytest.approx(PI, abs=1e-15)


def test_fixed_points_none_beyond_unit_ratio():
    assert pendulum_fixed_points(PendulumParams(1.0, 1.5)) == []


def test_fixed_points_half_torque():
    pts = pendulum_fixed_points(PendulumParams(1.0, 0.5))
    assert len(pts) == 2
    (a1, k1), (a2, k2) = pts
    assert a1 == pytest.approx(7 * PI / 6, rel=1e-14) and k1 is PointKind.CENTER
    assert a2 == pytest.approx(11 * PI / 6, rel=1e-14) and k2 is PointKind.SADDLE


@pytest.mark.parametrize("Fp", [1.0, 0.3, 2.5])
def test_fixed_point_boundary_exact(Fp):
    assert [k for _, k in pendulum_fixed_points(PendulumParams(Fp, Fp))] == [PointKind.DEGENERATE]
    assert [k for _, k in pendulum_fixed_points(PendulumParams(Fp, -Fp))] == [PointKind.DEGENERATE]
    assert pendulum_fixed_points(PendulumParams(Fp, math.nextafter(Fp, 2 * Fp))) == []
    assert len(pendulum_fixed_points(PendulumParams(Fp, math.nextafter(Fp, 0.0)))) == 2


@given(st.floats(0.1, 5.0), st.floats(-0.99, 0.99))
def test_fixed_points_are_equilibria(Fp, ratio):
    params = PendulumParams(Fp, ratio * Fp)
    for alpha, kind in pendulum_fixed_points(params):
        assert 0 <= alpha < 2 * PI
        assert abs(pendulum_rhs(alpha, 0.0, params)[1]) < 1e-12 * Fp
        assert (kind is PointKind.CENTER) == (Fp * math.cos(alpha) < 0)


def test_parity_matches_pendulum_points():
    # the stable parity n = 1 sits at the center, n = 0 at the saddle
    kinds = dict((round(a, 12), k) for a, k in pendulum_fixed_points(PendulumParams(1.0, 0.0)))
    law = ForcingLaw(1.0, 0.0)
    assert kinds[round(AsymptoticProfile(law, 1).alpha0, 12)] is PointKind.CENTER
    assert kinds[round(AsymptoticProfile(law, 0).alpha0, 12)] is PointKind.SADDLE


@pytest.mark.parametrize(
    "alpha, alpha_dot, region",
    [(PI, 0.0, Region.INSIDE), (PI, 2.1, Region.OUTSIDE), (PI, 2.0, Region.BOUNDARY), (PI + 2 * PI, 0.5, Region.INSIDE)],
)
def test_inside_separatrix_examples(alpha, alpha_dot, region):
    assert inside_separatrix(alpha, alpha_dot, PendulumParams(1.0, 0.0)) is region


def test_no_equilibria_everything_outside():
    params = PendulumParams(1.0, 1.2)
    assert separatrix_loop(params) is None
    assert np.all(separatrix_regions(np.linspace(0, 6, 7), 0.0, params) == Region.OUTSIDE.value)
    assert np.all(np.isnan(energy_gap([1.0, 2.0], 0.0, params)))


def test_separatrix_loop_with_torque():
    params = PendulumParams(1.0, 0.3)
    loop = separatrix_loop(params)
    assert loop.lo < loop.center < loop.hi
    assert loop.hi - loop.lo < 2 * PI
    V = lambda a: params.Fp * math.cos(a) - params.D * a  # noqa: E731
    assert V(loop.lo) == pytest.approx(loop.E_s, abs=1e-12)
    assert V(loop.hi) == pytest.approx(loop.E_s, abs=1e-12)
    assert pendulum_rhs(loop.saddle, 0.0, params)[1] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("Fp, D", [(1.0, 0.0), (1.0, 0.3), (2.0, 0.05), (1.0, -0.5)])
def test_separatrix_matches_brute_force(Fp, D):
    params = PendulumParams(Fp, D)
    a, ad = np.meshgrid(np.linspace(0, 2 * PI, 20, endpoint=False), np.linspace(-3, 3, 20), indexing="ij")
    a, ad = a.ravel(), ad.ravel()
    keep = np.abs(energy_gap(a, ad, params)) > 1e-3
    predicted = separatrix_regions(a[keep], ad[keep], params) == Region.INSIDE.value
    brute = brute_force_inside(a[keep], ad[keep], params)
    assert keep.sum() > 300
    assert np.array_equal(predicted, brute)


# ------------------------------------------------------------------ capture flow vs pendulum


def _capture_vs_pendulum(a0, ad0, literal=False, bracket=True):
    fr = capture_frame(0.05, 0.0)
    params = PendulumParams.from_frame(fr, 1.0, literal)
    s = np.linspace(0.0, 20.0, 401)
    cfg = IntegratorConfig(rtol=1e-10, atol=1e-12)
    if bracket:
        field_ = capture_field(fr, 1.0)
    else:
        # capture system with the O(delta) bracket removed (lam = 0, F = 1)
        field_ = lambda s_, y: np.array([math.sin(y[1]), 2 * y[0] + fr.drive * s_])  # noqa: E731
    cap = integrate(field_, [ad0 / 2, a0], (0.0, 20.0), cfg, s, Frame.CAPTURE)
    pen = integrate(pendulum_field(params), [a0, ad0], (0.0, 20.0), cfg, s, Frame.PENDULUM)
    return np.max(np.abs(cap.y[:, 1] - pen.y[:, 0]))


LARGE_SWINGS = [(PI, 1.0), (PI + 1.0, 0.0), (2.0, 1.0), (4.0, -0.8)]


@pytest.mark.parametrize("a0, ad0", [(PI, 0.25), (PI, 0.5), (PI + 0.5, 0.0)])
def test_small_delta_consistency_small_swings(a0, ad0):
    assert _capture_vs_pendulum(a0, ad0) < 0.1


@pytest.mark.xfail(strict=True, reason="the O(delta) bracket shifts the libration frequency; drift grows with amplitude")
def test_small_delta_consistency_large_swings():
    assert all(_capture_vs_pendulum(a0, ad0) < 0.1 for a0, ad0 in LARGE_SWINGS)


@pytest.mark.parametrize("a0, ad0", LARGE_SWINGS)
def test_reduction_exact_without_delta_bracket(a0, ad0):
    assert _capture_vs_pendulum(a0, ad0, bracket=False) < 1e-8


@pytest.mark.parametrize("a0, ad0", [(PI, 0.5)] + LARGE_SWINGS)
def test_derived_coefficient_beats_literal(a0, ad0):
    assert _capture_vs_pendulum(a0, ad0) < _capture_vs_pendulum(a0, ad0, literal=True)


def test_consistency_grid():
    rep = capture_consistency()
    assert rep.alpha.size == 225
    assert rep.n_compared > 150
    assert rep.agreement >= 0.9


# ------------------------------------------------------------------ classification


def test_classify_exact_autoresonance_original_frame():
    t = np.sqrt(2 * np.geomspace(1e2, 1e4, 500))
    tr = TrajectoryRecord(Frame.ORIGINAL, t, np.stack([-np.sqrt(t), 0 * t], axis=1))
    v = classify_trajectory(tr)
    assert v.verdict is Verdict.CAPTURED
    assert v.diagnostics.amplitude_ratio == pytest.approx(1.0, abs=1e-12)
    assert v.diagnostics.residence == 1.0


def test_classify_decaying_drifting_slow_frame():
    tau = np.geomspace(1e2, 1e4, 4000)
    psi = tau**-0.25 * np.exp(1.3j * tau)
    tr = TrajectoryRecord(Frame.SLOW, tau, np.stack([psi.real, psi.imag], axis=1))
    v = classify_trajectory(tr)
    assert v.verdict is Verdict.NOT_CAPTURED
    assert v.diagnostics.decay_exponent == pytest.approx(-0.5, abs=1e-9)


def test_classify_undecided():
    # amplitude settles away from both regimes
    tau = np.geomspace(1e2, 1e4, 500)
    tr = TrajectoryRecord(Frame.POLAR, tau, np.stack([np.full_like(tau, 0.6), np.full_like(tau, PI)], axis=1))
    assert classify_trajectory(tr).verdict is Verdict.UNDECIDED


def test_classify_needs_two_decades():
    tau = np.geomspace(1e2, 5e3, 100)
    tr = TrajectoryRecord(Frame.POLAR, tau, np.zeros((100, 2)))
    with pytest.raises(InsufficientDataError):
        classify_trajectory(tr)


def test_classify_rejects_pendulum_frame():
    tau = np.geomspace(1.0, 1e3, 50)
    with pytest.raises(DomainError):
        classify_trajectory(TrajectoryRecord(Frame.PENDULUM, tau, np.zeros((50, 2))))


def test_classify_asymptote_polar_trajectory():
    law = ForcingLaw(1.0, 0.0)
    start = truncated_asymptote(AsymptoticProfile(law, 1), 1e2)
    tau = np.geomspace(1e2, 1e4, 4000)
    tr = integrate(polar_field(law), [start.rho, start.alpha], (1e2, 1e4), IntegratorConfig(rtol=1e-10), tau, Frame.POLAR)
    assert classify_trajectory(tr, law).verdict is Verdict.CAPTURED


def test_classify_locked_slow_trajectory():
    # in the slow frame the locked branch sits near alpha = 0
    law = ForcingLaw(1.0, 0.0)
    tau0 = 1e2
    rho = law.F / 2 * tau0**-law.A
    alpha = -(tau0 ** (law.A - 1)) / (4 * law.F)
    psi0 = (1 + rho) * np.exp(1j * (tau0 + alpha))
    tau = np.geomspace(tau0, 1e4, 20000)
    tr = integrate(slow_field(law), [psi0.real, psi0.imag], (tau0, 1e4), IntegratorConfig(rtol=1e-10, h_max=0.2), tau)
    v = classify_trajectory(tr, law, Thresholds(phase_center=0.0))
    assert v.verdict is Verdict.CAPTURED


# ------------------------------------------------------------------ scans


def test_scan_zero_forcing_never_captures():
    ics = np.array([[0.0, PI], [0.05, 3.0], [-0.1, 0.5]])
    rows = capture_scan([-0.2, 0.0, 0.5], [0.0], ics, n_samples=500)
    assert [r.lam for r in rows] == [-0.2, 0.0, 0.5]
    assert all(r.captured_fraction == 0.0 and r.n_samples == 3 for r in rows)


def test_scan_asymptote_cell_captured():
    (row,) = capture_scan([0.0], [1.0], asymptote_ic)
    assert row.captured_fraction == 1.0 and row.n_samples == 1


def test_scan_near_vacuum_does_not_crash():
    ics = np.array([[-0.99, a] for a in np.linspace(0, 2 * PI, 5, endpoint=False)])
    (row,) = capture_scan([0.0], [1.0], ics, n_samples=500)
    assert row.n_samples == 5
    assert 0.0 <= row.captured_fraction <= 1.0
    assert 0.0 <= row.undecided_fraction <= 1.0


def test_scan_validation():
    with pytest.raises(DomainError):
        capture_scan([], [1.0], asymptote_ic)
    with pytest.raises(DomainError):
        capture_scan([0.0], [1.0], asymptote_ic, tau_span=(1e2, 5e3))


def test_scan_deterministic_across_workers():
    ics = disc_ics((0.0, PI), 0.2, 6)
    a = capture_scan([0.0, 0.3], [0.5, 1.0], ics, seed=3, n_samples=500, workers=1)
    b = capture_scan([0.0, 0.3], [0.5, 1.0], ics, seed=3, n_samples=500, workers=4)
    assert [(r.lam, r.F, r.captured_fraction, r.verdicts) for r in a] == [(r.lam, r.F, r.captured_fraction, r.verdicts) for r in b]


def _centred_disc(radius, count):
    disc = disc_ics((0.0, 0.0), radius, count)

    def make(law, tau0, rng):
        c = asymptote_ic(law, tau0)
        return np.vstack([c, c + disc(law, tau0, rng)])

    return make


def test_capture_locality_monotone():
    counts = []
    for radius, count in [(0.0, 0), (0.02, 4), (0.05, 8), (0.1, 12)]:
        (row,) = capture_scan([0.0], [1.0], _centred_disc(radius, count), seed=1, n_samples=500)
        counts.append(row.n_samples)
        assert row.verdicts[0] is Verdict.CAPTURED
    assert counts == sorted(counts)


def test_scan_derived_convention_runs():
    ics = np.array([[0.0, 0.0]])
    (row,) = capture_scan([0.0], [1.0], ics, n_samples=500, convention=PolarConvention.DERIVED, thresholds=Thresholds(phase_center=0.0))
    assert row.n_samples == 1
