"""Capture into resonance: the normalised capture system, its pendulum
reduction, separatrix geometry and trajectory classification.

Near the onset of locking the polar variables are rescaled with a small
parameter ``epsilon``; the resulting system in the slow time ``s`` is

    rho'   = b F sin(alpha)
    alpha' = 2 rho + D s + delta (rho^2 - b F sin(alpha) / (1 + delta rho))

with ``b = (1 + delta D s)^(2 lam)``, ``delta = epsilon^(3/2 - 2 lam)`` and
``D = epsilon^(1 + 4 lam)``.  Dropping the ``delta`` terms and eliminating
``rho`` gives a pendulum with constant torque, ``alpha'' = Fp sin(alpha) + D``
with ``Fp = 2F``.  Captured solutions are the orbits inside the separatrix
loop of that pendulum.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DegeneratePolarError, DomainError, InsufficientDataError, IntegrationError
from .integrator import BatchGuard, IntegratorConfig, TrajectoryRecord, fit_power_law, integrate_batch
from .kernels import JitField, capture_kernel, pendulum_kernel
from .models import ForcingLaw, Frame, PolarConvention, polar_field, slow_from_original_arrays
from .parallel import parallel_map

DELTA_MAX = 0.2
BOUNDARY_TOL = 1e-9


# ---------------------------------------------------------------- capture system


@dataclass(frozen=True)
class CaptureFrame:
    """Scaling of the capture system; ``delta`` and ``drive`` are derived."""

    epsilon: float
    lam: float
    delta_max: float = DELTA_MAX

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    @property
    def delta(self) -> float:
        return self.epsilon ** (1.5 - 2.0 * self.lam)

    @property
    def drive(self) -> float:
        return self.epsilon ** (1.0 + 4.0 * self.lam)

    @property
    def valid(self) -> bool:
        """Whether ``delta`` is small enough for the pendulum reduction."""
        return self.delta < self.delta_max


def capture_frame(epsilon: float, lam: float, delta_max: float = DELTA_MAX) -> CaptureFrame:
    return CaptureFrame(epsilon, lam, delta_max)


def rhs_capture(s: float, rho: float, alpha: float, frame: CaptureFrame, F: float) -> tuple[float, float]:
    delta, D = frame.delta, frame.drive
    base = 1.0 + delta * D * s
    if not base > 0:
        raise DomainError(f"1 + delta D s must be positive, got {base}")
    if not 1.0 + delta * rho > 0:
        raise DegeneratePolarError(f"1 + delta rho must be positive, got {1.0 + delta * rho}")
    force = base ** (2.0 * frame.lam) * F * math.sin(alpha)
    drho = force
    dalpha = 2.0 * rho + D * s + delta * (rho * rho - force / (1.0 + delta * rho))
    return drho, dalpha


def capture_field(frame: CaptureFrame, F: float) -> JitField:
    """Capture system as a compiled field; state ``(rho, alpha)``."""
    return JitField(capture_kernel, np.array([F, 2.0 * frame.lam, frame.delta, frame.drive]))


# ---------------------------------------------------------------- pendulum


@dataclass(frozen=True)
class PendulumParams:
    Fp: float
    D: float

    def __post_init__(self):
        if not (self.Fp > 0 and math.isfinite(self.Fp)):
            raise DomainError(f"Fp must be positive, got {self.Fp}")
        if not math.isfinite(self.D):
            raise DomainError("D must be finite")

    @classmethod
    def from_frame(cls, frame: CaptureFrame, F: float, literal: bool = False) -> "PendulumParams":
        """Reduction of the capture system.

        Eliminating ``rho`` gives ``Fp = 2F``; ``literal=True`` uses ``Fp = F``
        as the reduced equation is commonly printed.
        """
        return cls(F if literal else 2.0 * F, frame.drive)


def pendulum_rhs(alpha, alpha_dot, params: PendulumParams):
    return alpha_dot, params.Fp * np.sin(alpha) + params.D


def pendulum_field(params: PendulumParams) -> JitField:
    """Pendulum as a compiled field; state ``(alpha, alpha_dot)``."""
    return JitField(pendulum_kernel, np.array([params.Fp, params.D]))


def pendulum_energy(alpha, alpha_dot, params: PendulumParams):
    """``E = alpha_dot^2 / 2 + Fp cos(alpha) - D alpha``."""
    return 0.5 * np.square(alpha_dot) + params.Fp * np.cos(alpha) - params.D * np.asarray(alpha)


class PointKind(str, enum.Enum):
    CENTER = "Center"
    SADDLE = "Saddle"
    DEGENERATE = "Degenerate"


def _wrap(x: float) -> float:
    # x % 2pi can round up to 2pi for tiny negative x
    r = x % (2.0 * math.pi)
    return 0.0 if r >= 2.0 * math.pi else r


def pendulum_fixed_points(params: PendulumParams) -> list[tuple[float, PointKind]]:
    """Equilibria in ``[0, 2 pi)``, sorted by angle; empty when ``|D/Fp| > 1``."""
    ratio = -params.D / params.Fp
    if abs(ratio) > 1.0:
        return []
    if abs(ratio) == 1.0:
        return [(_wrap(math.asin(ratio)), PointKind.DEGENERATE)]
    a = math.asin(ratio)
    out = []
    for alpha in {_wrap(a), _wrap(math.pi - a)}:
        kind = PointKind.CENTER if params.Fp * math.cos(alpha) < 0 else PointKind.SADDLE
        out.append((alpha, kind))
    return sorted(out)


def _potential(alpha, params):
    return params.Fp * np.cos(alpha) - params.D * alpha


@dataclass(frozen=True)
class SeparatrixLoop:
    """Homoclinic loop around the center.

    The loop spans ``[lo, hi]`` in alpha; one end is the saddle whose
    energy ``E_s`` bounds it, the other the turning point at that energy.
    """

    center: float
    saddle: float
    lo: float
    hi: float
    E_s: float


def separatrix_loop(params: PendulumParams) -> SeparatrixLoop | None:
    """The loop around the center, or ``None`` when no center exists."""
    pts = pendulum_fixed_points(params)
    centers = [a for a, k in pts if k is PointKind.CENTER]
    saddles = [a for a, k in pts if k is PointKind.SADDLE]
    if not centers:
        return None
    c, s = centers[0], saddles[0]
    two_pi = 2.0 * math.pi
    # the neighbouring saddles of this center
    right = s if s > c else s + two_pi
    left = right - two_pi
    V = lambda x: _potential(x, params)  # noqa: E731
    # the lower of the two saddles bounds the loop
    if V(right) <= V(left):
        saddle, E_s = right, float(V(right))
        other = brentq(lambda x: V(x) - E_s, left, c) if params.D != 0 else left
        lo, hi = other, saddle
    else:
        saddle, E_s = left, float(V(left))
        other = brentq(lambda x: V(x) - E_s, c, right)
        lo, hi = saddle, other
    return SeparatrixLoop(c, saddle, float(lo), float(hi), E_s)


class Region(str, enum.Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    BOUNDARY = "boundary"


def separatrix_regions(alpha, alpha_dot, params: PendulumParams, tol: float = BOUNDARY_TOL) -> np.ndarray:
    """Vectorised :func:`inside_separatrix`; returns an array of region names."""
    alpha, alpha_dot = np.broadcast_arrays(np.asarray(alpha, dtype=float), np.asarray(alpha_dot, dtype=float))
    out = np.full(alpha.shape, Region.OUTSIDE.value, dtype="<U8")
    loop = separatrix_loop(params)
    if loop is None:
        return out
    # shift alpha by whole turns into [lo, lo + 2 pi)
    a = loop.lo + np.mod(alpha - loop.lo, 2.0 * np.pi)
    within = a <= loop.hi
    E = pendulum_energy(a, alpha_dot, params)
    out[within & (E < loop.E_s - tol)] = Region.INSIDE.value
    out[within & (np.abs(E - loop.E_s) < tol)] = Region.BOUNDARY.value
    return out


def inside_separatrix(alpha: float, alpha_dot: float, params: PendulumParams, tol: float = BOUNDARY_TOL) -> Region:
    return Region(str(separatrix_regions(alpha, alpha_dot, params, tol)[()]))


def energy_gap(alpha, alpha_dot, params: PendulumParams):
    """``E - E_s`` after shifting alpha into the loop interval (NaN with no loop)."""
    loop = separatrix_loop(params)
    alpha = np.asarray(alpha, dtype=float)
    if loop is None:
        return np.full(np.broadcast(alpha, alpha_dot).shape, np.nan)
    a = loop.lo + np.mod(alpha - loop.lo, 2.0 * np.pi)
    return pendulum_energy(a, alpha_dot, params) - loop.E_s


PENDULUM_CONFIG = IntegratorConfig(rtol=1e-10, atol=1e-12)


def _bounded_phase(field_, y0, span, cfg, n_samples, phase_row):
    """True where the phase row stays in a window narrower than 2 pi."""
    a0 = y0[phase_row]
    lo, hi = a0.min() - 2.0 * np.pi, a0.max() + 2.0 * np.pi
    box_lo = [-np.inf, -np.inf]
    box_hi = [np.inf, np.inf]
    box_lo[phase_row], box_hi[phase_row] = lo, hi
    guard = BatchGuard(box_lo=tuple(box_lo), box_hi=tuple(box_hi))
    ts = np.linspace(span[0], span[1], n_samples)
    Y, retired = integrate_batch(field_, y0, span, cfg, ts, guard)
    a = Y[:, phase_row, :]
    with np.errstate(invalid="ignore"):
        rng = np.nanmax(a, axis=0) - np.nanmin(a, axis=0)
    return np.isnan(retired) & (rng < 2.0 * np.pi)


def brute_force_inside(alpha, alpha_dot, params: PendulumParams, span: float = 1e3, cfg=PENDULUM_CONFIG, n_samples=2001):
    """Classify orbits by integration: librating (alpha range < 2 pi) means inside."""
    alpha = np.ravel(np.asarray(alpha, dtype=float))
    alpha_dot = np.ravel(np.asarray(alpha_dot, dtype=float))
    y0 = np.stack([alpha, alpha_dot])
    return _bounded_phase(pendulum_field(params), y0, (0.0, span), cfg, n_samples, 0)


def capture_flow_bounded(
    frame: CaptureFrame, F: float, alpha, alpha_dot, s_max: float = 100.0, cfg=PENDULUM_CONFIG, n_samples=2001
):
    """Capture-system verdict per IC: alpha range stays below 2 pi over ``[0, s_max]``.

    The IC is ``(rho, alpha) = (alpha_dot / 2, alpha)`` at ``s = 0``.
    """
    alpha = np.ravel(np.asarray(alpha, dtype=float))
    alpha_dot = np.ravel(np.asarray(alpha_dot, dtype=float))
    y0 = np.stack([0.5 * alpha_dot, alpha])
    return _bounded_phase(capture_field(frame, F), y0, (0.0, s_max), cfg, n_samples, 1)


@dataclass
class ConsistencyReport:
    alpha: np.ndarray
    alpha_dot: np.ndarray
    energy_gap: np.ndarray
    predicted_inside: np.ndarray
    flow_captured: np.ndarray
    in_band: np.ndarray

    @property
    def n_compared(self) -> int:
        return int(np.sum(~self.in_band))

    @property
    def agreement(self) -> float:
        keep = ~self.in_band
        return float(np.mean(self.predicted_inside[keep] == self.flow_captured[keep])) if keep.any() else float("nan")


def capture_consistency(
    epsilon: float = 0.05,
    lam: float = 0.0,
    F: float = 1.0,
    n_alpha: int = 15,
    n_alpha_dot: int = 15,
    alpha_dot_max: float = 4.0,
    band: float = 1e-3,
    periods: float = 10.0,
    literal: bool = False,
) -> ConsistencyReport:
    """Compare the separatrix prediction with the capture-system flow on a grid.

    The flow is followed for ``periods`` small-oscillation periods
    ``2 pi / sqrt(Fp)``; over much longer spans the ``delta`` terms let
    orbits near the separatrix leak out of the loop.  Grid points with
    ``|E - E_s| <= band`` are flagged and left out of the agreement fraction.
    """
    frame = capture_frame(epsilon, lam)
    params = PendulumParams.from_frame(frame, F, literal)
    s_max = periods * 2.0 * np.pi / np.sqrt(params.Fp)
    a, ad = np.meshgrid(
        np.linspace(0.0, 2.0 * np.pi, n_alpha, endpoint=False), np.linspace(-alpha_dot_max, alpha_dot_max, n_alpha_dot), indexing="ij"
    )
    a, ad = a.ravel(), ad.ravel()
    gap = energy_gap(a, ad, params)
    predicted = separatrix_regions(a, ad, params) == Region.INSIDE.value
    flow = capture_flow_bounded(frame, F, a, ad, s_max)
    return ConsistencyReport(a, ad, gap, predicted, flow, np.abs(gap) <= band)


# ---------------------------------------------------------------- classification


class Verdict(str, enum.Enum):
    CAPTURED = "Captured"
    NOT_CAPTURED = "NotCaptured"
    UNDECIDED = "Undecided"


@dataclass(frozen=True)
class CaptureDiagnostics:
    amplitude_ratio: float  # mean |Psi|/sqrt(t) = mean (1 + rho) over the final decade
    decay_exponent: float  # fitted exponent of |psi|^2 over the final decade
    residence: float  # fraction of final-decade samples with alpha near the phase center


@dataclass(frozen=True)
class CaptureVerdict:
    verdict: Verdict
    diagnostics: CaptureDiagnostics


@dataclass(frozen=True)
class Thresholds:
    amp_lo: float = 0.8
    amp_hi: float = 1.2
    residence: float = 0.9
    decay: float = -0.5
    decay_tol: float = 0.15
    phase_center: float = math.pi
    phase_halfwidth: float = math.pi / 2


def _polar_series(traj: TrajectoryRecord):
    if traj.frame is Frame.POLAR:
        return traj.t, traj.y[:, 0], traj.y[:, 1]
    if traj.frame is Frame.SLOW:
        tau, psi = traj.t, traj.y[:, 0] + 1j * traj.y[:, 1]
    elif traj.frame is Frame.ORIGINAL:
        tau, psi = slow_from_original_arrays(traj.t, traj.y[:, 0] + 1j * traj.y[:, 1])
    else:
        raise DomainError(f"cannot classify a trajectory in the {traj.frame.value} frame")
    amp = np.abs(psi)
    alpha = np.angle(psi * np.exp(-1j * tau))
    return tau, amp - 1.0, alpha


def classify_trajectory(traj: TrajectoryRecord, law: ForcingLaw | None = None, thresholds: Thresholds = Thresholds()) -> CaptureVerdict:
    """Captured, NotCaptured or Undecided from the final decade of ``traj``.

    Captured needs the mean of ``1 + rho`` inside ``[amp_lo, amp_hi]`` and
    alpha within ``phase_center +- phase_halfwidth`` (mod 2 pi) for more
    than a ``residence`` fraction of samples.  Otherwise NotCaptured if
    ``|psi|^2`` decays with exponent ``decay +- decay_tol``.  Accepts
    polar, slow and original frames; times are converted to ``tau``.
    ``law`` is accepted for symmetry with the integrators and not used.
    """
    tau, rho, alpha = _polar_series(traj)
    if tau.size < 2 or not tau[0] > 0 or tau[-1] / tau[0] < 100.0 * (1 - 1e-12):
        raise InsufficientDataError("classification needs a trajectory spanning at least two decades")
    last = tau >= tau[-1] / 10.0
    amp = 1.0 + rho[last]
    ratio = float(np.mean(amp))
    off = np.angle(np.exp(1j * (alpha[last] - thresholds.phase_center)))
    residence = float(np.mean(np.abs(off) < thresholds.phase_halfwidth))
    try:
        exponent = fit_power_law(tau[last], amp**2).exponent
    except (InsufficientDataError, DomainError):
        exponent = float("nan")
    diag = CaptureDiagnostics(ratio, exponent, residence)
    if thresholds.amp_lo <= ratio <= thresholds.amp_hi and residence > thresholds.residence:
        return CaptureVerdict(Verdict.CAPTURED, diag)
    if abs(exponent - thresholds.decay) <= thresholds.decay_tol:
        return CaptureVerdict(Verdict.NOT_CAPTURED, diag)
    return CaptureVerdict(Verdict.UNDECIDED, diag)


# ---------------------------------------------------------------- scans


SCAN_CONFIG = IntegratorConfig(rtol=1e-8, atol=1e-11)
# polar amplitudes below this are treated as lost (the polar chart breaks down)
SCAN_MIN_AMPLITUDE = 1e-3


@dataclass(frozen=True)
class ScanRow:
    lam: float
    F: float
    captured_fraction: float
    undecided_fraction: float
    n_samples: int
    verdicts: tuple[Verdict, ...] = field(default=(), compare=False)


def asymptote_ic(law: ForcingLaw, tau0: float, rng=None) -> np.ndarray:
    """Single IC on the truncated n = 1 asymptote, shape ``(1, 2)``."""
    from .asymptotics import AsymptoticProfile, truncated_asymptote

    s = truncated_asymptote(AsymptoticProfile(law, 1), tau0)
    return np.array([[s.rho, s.alpha]])


@dataclass(frozen=True)
class DiscICs:
    """IC factory: ``count`` points uniform in a disc of ``radius`` about ``center``.

    The disc is sampled from the cell's random generator, so a scan stays
    deterministic in its seed.
    """

    center: tuple[float, float]
    radius: float
    count: int

    def __call__(self, law, tau0, rng):
        r = self.radius * np.sqrt(rng.uniform(size=self.count))
        th = rng.uniform(0.0, 2.0 * np.pi, self.count)
        return np.column_stack([self.center[0] + r * np.cos(th), self.center[1] + r * np.sin(th)])


def disc_ics(center: Sequence[float], radius: float, count: int) -> DiscICs:
    return DiscICs((float(center[0]), float(center[1])), float(radius), int(count))


def _classify_batch(law, ics, tau_span, cfg, n_samples, thresholds, convention):
    taus = np.geomspace(tau_span[0], tau_span[1], n_samples)
    field_ = polar_field(law, convention)
    guard = BatchGuard(amp_min=SCAN_MIN_AMPLITUDE)
    try:
        Y, retired = integrate_batch(field_, ics.T.copy(), tau_span, cfg, taus, guard)
    except IntegrationError:
        if ics.shape[0] == 1:
            return [Verdict.UNDECIDED]
        # isolate the failing member
        return [v for ic in ics for v in _classify_batch(law, ic[None, :], tau_span, cfg, n_samples, thresholds, convention)]
    out = []
    for j in range(ics.shape[0]):
        if not np.isnan(retired[j]):
            out.append(Verdict.UNDECIDED)
            continue
        traj = TrajectoryRecord(Frame.POLAR, taus, Y[:, :, j])
        out.append(classify_trajectory(traj, law, thresholds).verdict)
    return out


def _scan_cell(args):
    lam, F, ic_grid, tau_span, cfg, n_samples, thresholds, convention, seed_seq = args
    law = ForcingLaw(F, lam)
    if callable(ic_grid):
        ics = np.asarray(ic_grid(law, tau_span[0], np.random.default_rng(seed_seq)), dtype=float)
    else:
        ics = np.asarray(ic_grid, dtype=float)
    ics = ics.reshape(-1, 2)
    if ics.shape[0] == 0:
        return ScanRow(lam, F, float("nan"), float("nan"), 0)
    verdicts = _classify_batch(law, ics, tau_span, cfg, n_samples, thresholds, convention)
    n = len(verdicts)
    cap = sum(v is Verdict.CAPTURED for v in verdicts) / n
    und = sum(v is Verdict.UNDECIDED for v in verdicts) / n
    return ScanRow(lam, F, cap, und, n, tuple(verdicts))


def capture_scan(
    lambda_grid: Sequence[float],
    F_grid: Sequence[float],
    ic_grid,
    tau_span: tuple[float, float] = (1e2, 1e4),
    cfg: IntegratorConfig = SCAN_CONFIG,
    seed: int = 0,
    n_samples: int = 2000,
    thresholds: Thresholds = Thresholds(),
    convention: PolarConvention = PolarConvention.PAPER,
    workers: int | None = None,
) -> list[ScanRow]:
    """Captured and undecided fractions for every ``(lambda, F)`` cell.

    ``ic_grid`` is an array of ``(rho, alpha)`` states at ``tau_span[0]`` or
    a factory ``(law, tau0, rng) -> array``.  Each cell draws from its own
    generator spawned from ``seed``, so results do not depend on the order
    or number of workers.  Rows come out in ``lambda``-major order.
    """
    lambda_grid, F_grid = list(lambda_grid), list(F_grid)
    if not lambda_grid or not F_grid:
        raise DomainError("lambda and F grids must be nonempty")
    tau0, tau1 = tau_span
    if not (tau0 > 0 and tau1 / tau0 >= 100.0):
        raise DomainError("tau_span must cover at least two decades")
    cells = [(lam, F) for lam in lambda_grid for F in F_grid]
    seeds = np.random.SeedSequence(seed).spawn(len(cells))
    jobs = [(lam, F, ic_grid, tau_span, cfg, n_samples, thresholds, convention, ss) for (lam, F), ss in zip(cells, seeds)]
    return parallel_map(_scan_cell, jobs, workers)
