"""Lyapunov stability of the autoresonant branch.

Perturbations ``p = rho - rho*``, ``q = alpha - alpha*`` are obtained by
trajectory subtraction: the full polar system is integrated from the
reference point on the truncated asymptote and from the perturbed points
in one batch, with identical steps, and differenced.  No linearised or
hand-derived perturbation equations are involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .asymptotics import AsymptoticProfile, truncated_asymptote
from .errors import DomainError, EscapeError, InsufficientDataError
from .integrator import BatchGuard, IntegratorConfig, TrajectoryRecord, integrate_batch
from .models import Frame, PolarConvention, polar_field
from .parallel import parallel_map

ESCAPE_P = 0.5
ESCAPE_Q = 1.0
# members this close to the polar singularity are retired as escaped
MIN_AMPLITUDE = 0.05

# batch size is fixed so results do not depend on the worker count
CHUNK = 25

STABILITY_CONFIG = IntegratorConfig(rtol=1e-10, atol=1e-13)


@dataclass(frozen=True)
class PerturbationState:
    p: float
    q: float
    tau: float

    def __post_init__(self):
        if not (np.isfinite(self.p) and np.isfinite(self.q)):
            raise DomainError("perturbation must be finite")
        if not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau}")


def lyapunov_value(state: PerturbationState, F: float, A: float, q_weight: float = 1.0) -> float:
    """``L = q_weight F tau^-A q^2 + p^2``.

    ``q_weight = 1`` is the published form.  ``q_weight = 1/2`` is the
    energy of the linearised libration ``q' = 2p, p' = -F tau^-A q``, which
    the published form is not conserved by.
    """
    return q_weight * F * state.tau ** (-A) * state.q**2 + state.p**2


def lyapunov_series(tau, p, q, F: float, A: float, q_weight: float = 1.0):
    tau = np.asarray(tau, dtype=float)
    return q_weight * F * tau ** (-A) * np.asarray(q) ** 2 + np.asarray(p) ** 2


def level_set_point(radius: float, theta, tau: float, F: float, A: float):
    """Point(s) with ``L = radius^2`` at angle ``theta`` on the ellipse."""
    theta = np.asarray(theta, dtype=float)
    return radius * np.cos(theta), radius * np.sin(theta) / np.sqrt(F * tau ** (-A))


def _run_batch(profile, p0, q0, tau0, tau1, cfg, sample_times, convention=PolarConvention.PAPER):
    ref = truncated_asymptote(profile, tau0)
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    y0 = np.empty((2, p0.size + 1))
    y0[0, 0], y0[1, 0] = ref.rho, ref.alpha
    y0[0, 1:] = ref.rho + p0
    y0[1, 1:] = ref.alpha + q0
    guard = BatchGuard(amp_min=MIN_AMPLITUDE, ref_dev=(ESCAPE_P, ESCAPE_Q))
    Y, dropped_at = integrate_batch(polar_field(profile.law, convention), y0, (tau0, tau1), cfg, sample_times, guard)
    p = Y[:, 0, 1:] - Y[:, 0, :1]
    q = Y[:, 1, 1:] - Y[:, 1, :1]
    # members retired together with the reference count as escapes
    return p, q, dropped_at[1:]


def perturbation_flow(
    start: PerturbationState,
    profile: AsymptoticProfile,
    span: tuple[float, float],
    cfg: IntegratorConfig = STABILITY_CONFIG,
    sample_times=None,
    raise_on_escape: bool = True,
) -> TrajectoryRecord:
    """Trace ``(p, q)(tau)`` by trajectory subtraction; ``start.tau`` must equal ``span[0]``."""
    tau0, tau1 = span
    if start.tau != tau0:
        raise DomainError("the perturbation must be given at the start of the span")
    if not (1e2 <= tau0 < tau1 <= 1e6):
        raise DomainError("perturbation spans must lie within [1e2, 1e6]")
    if sample_times is None:
        sample_times = np.geomspace(tau0, tau1, 4000)
    sample_times = np.asarray(sample_times, dtype=float)
    p, q, escaped_at = _run_batch(profile, start.p, start.q, tau0, tau1, cfg, sample_times)
    esc = float(escaped_at[0])
    if not np.isnan(esc) and raise_on_escape:
        raise EscapeError(f"perturbation escaped (|p|>{ESCAPE_P} or |q|>{ESCAPE_Q})", esc)
    keep = ~np.isnan(p[:, 0])
    meta = {"profile": profile, "start": start, "config": cfg, "escaped_at": esc}
    return TrajectoryRecord(Frame.POLAR, sample_times[keep], np.stack([p[keep, 0], q[keep, 0]], axis=1), meta)


def lyapunov_rate(trace: TrajectoryRecord, F: float, A: float, q_weight: float = 1.0):
    """Central-difference ``dL/dtau`` along a trace, next to the model ``-p^2/(4 tau)``.

    Returns ``(tau, rate, model)`` arrays.
    """
    if len(trace) < 3:
        raise InsufficientDataError("need at least 3 samples for central differences")
    tau = trace.t
    p, q = trace.y[:, 0], trace.y[:, 1]
    L = lyapunov_series(tau, p, q, F, A, q_weight)
    return tau, np.gradient(L, tau), -(p**2) / (4.0 * tau)


def windowed_rates(trace: TrajectoryRecord, F: float, A: float, width: float, q_weight: float = 1.0):
    """Mean ``dL/dtau`` over consecutive windows of ``width``: ``(starts, rates)``.

    Window ends are read off the sampled trace by linear interpolation, so
    the trace should be sampled finely compared with ``width``.
    """
    tau = trace.t
    L = lyapunov_series(tau, trace.y[:, 0], trace.y[:, 1], F, A, q_weight)
    starts = np.arange(tau[0], tau[-1] - width + 1e-9 * width, width)
    Ls = np.interp(starts, tau, L)
    Le = np.interp(starts + width, tau, L)
    return starts, (Le - Ls) / width


def max_ratio(L: np.ndarray) -> float:
    """``max_tau L(tau) / L(tau0)``; 1 for the unperturbed (all-zero) trace."""
    L = np.asarray(L, dtype=float)
    L = L[~np.isnan(L)]
    if L.size == 0:
        return float("nan")
    if L[0] == 0:
        return 1.0 if np.all(L == 0) else float("inf")
    return float(np.max(L) / L[0])


@dataclass
class SampleSummary:
    sample: int
    p0: float
    q0: float
    max_L_ratio: float
    escaped: bool
    escaped_at: float


@dataclass
class StabilityReport:
    n: int
    samples: int
    tau0: float
    tau1: float
    max_L_ratio: float
    escaped: int
    radius: float
    seed: int
    per_sample: list[SampleSummary] = field(default_factory=list)
    # the same ratio for the linearised-energy weighting q_weight = 1/2
    max_L_ratio_energy: float = float("nan")

    @property
    def growth_or_escape(self) -> int:
        """Samples that escaped or whose L grew more than tenfold."""
        return sum(1 for s in self.per_sample if s.escaped or s.max_L_ratio > 10.0)


def draw_perturbations(radius: float, samples: int, tau0: float, F: float, A: float, seed: int):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, samples)
    return level_set_point(radius, theta, tau0, F, A)


def stability_experiment(
    n: int,
    law,
    radius: float = 1e-2,
    samples: int = 100,
    tau0: float = 1e3,
    tau1: float = 1e5,
    seed: int = 0,
    cfg: IntegratorConfig = STABILITY_CONFIG,
    n_times: int = 20000,
    perturbations=None,
    workers: int | None = None,
) -> StabilityReport:
    """Monte Carlo test of Lyapunov stability of the parity-``n`` branch.

    Initial perturbations lie on the level set ``L = radius^2`` at ``tau0``
    (uniform angle on the ellipse, deterministic in ``seed``) unless
    ``perturbations=(p0, q0)`` is given explicitly.
    """
    if not 0 < radius <= 0.1:
        raise DomainError(f"radius must lie in (0, 0.1], got {radius}")
    if samples < 1:
        raise DomainError("samples must be >= 1")
    profile = AsymptoticProfile(law, n)
    F, A = law.F, law.A
    if perturbations is None:
        p0, q0 = draw_perturbations(radius, samples, tau0, F, A, seed)
    else:
        p0, q0 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in perturbations)
        samples = p0.size
    taus = np.geomspace(tau0, tau1, n_times)

    chunks = _chunks(samples)
    jobs = [(profile, p0[c], q0[c], tau0, tau1, cfg, taus) for c in chunks]
    results = parallel_map(_batch_job, jobs, workers)
    p = np.concatenate([r[0] for r in results], axis=1)
    q = np.concatenate([r[1] for r in results], axis=1)
    escaped_at = np.concatenate([r[2] for r in results])

    L = lyapunov_series(taus[:, None], p, q, F, A)
    Lh = lyapunov_series(taus[:, None], p, q, F, A, q_weight=0.5)
    per = []
    for i in range(samples):
        per.append(
            SampleSummary(i, float(p0[i]), float(q0[i]), max_ratio(L[:, i]), bool(~np.isnan(escaped_at[i])), float(escaped_at[i]))
        )
    energy = [max_ratio(Lh[:, i]) for i in range(samples)]
    return StabilityReport(
        n=n,
        samples=samples,
        tau0=tau0,
        tau1=tau1,
        max_L_ratio=_nanmax([s.max_L_ratio for s in per]),
        escaped=sum(s.escaped for s in per),
        radius=radius,
        seed=seed,
        per_sample=per,
        max_L_ratio_energy=_nanmax(energy),
    )


def _nanmax(values) -> float:
    # samples retired at tau0 have no ratio; nan only if none has one
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    return float(v.max()) if v.size else float("nan")


def _batch_job(args):
    return _run_batch(*args)


def _chunks(n: int, size: int = CHUNK):
    return [np.arange(i, min(i + size, n)) for i in range(0, n, size)]
