"""Adaptive Dormand-Prince 5(4) integration with dense output.

States are real arrays whose leading axis is the state component; an
optional trailing axis carries a batch of independent trajectories that
share one step sequence.  The error norm is the component-wise maximum,
so each batch member satisfies ``|err| <= atol + rtol |y|`` on every
accepted step.

Fields built by :mod:`autoreson.models` are :class:`~autoreson.models.JitField`
objects and run through a numba-compiled copy of the stepping loop; any
other callable goes through the numpy loop in :func:`solve`.  Both use
the same tableau, controller and interpolant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .errors import BudgetError, DivergenceError, DomainError, InsufficientDataError, IntegrationError, StiffnessError
from .kernels import JitField, evaluate
from .models import Frame

EPS = np.finfo(float).eps

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = _A[6]
# fifth-order minus embedded fourth-order weights
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# Hairer's continuous extension
_D = (
    -12715105075 / 11282082432,
    0.0,
    87487479700 / 32700410799,
    -10690763975 / 1880347072,
    701980252875 / 199316789632,
    -1453857185 / 822651844,
    69997945 / 29380423,
)

SAFETY = 0.9
PI_ALPHA = 0.7 / 4
PI_BETA = 0.4 / 4
FAC_MIN, FAC_MAX = 0.2, 5.0


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-9
    atol: float = 1e-12
    h_init: float = 0.0  # 0 selects the automatic initial step
    h_max: float = math.inf
    max_steps: int = 5_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise DomainError("rtol and atol must be positive")
        if self.max_steps <= 0:
            raise DomainError("max_steps must be positive")
        if self.h_init < 0 or not self.h_max > 0:
            raise DomainError("h_init must be >= 0 and h_max > 0")

    def replace(self, **changes) -> "IntegratorConfig":
        return replace(self, **changes)


# the slow-frame drive oscillates as exp(i tau)
SLOW_FRAME_CONFIG = IntegratorConfig(h_max=0.2)


class DenseOutput:
    """Piecewise quartic interpolant collected step by step."""

    def __init__(self):
        self._t = []
        self._h = []
        self._coef = []

    def append(self, t, h, coef):
        self._t.append(t)
        self._h.append(h)
        self._coef.append(coef)

    @property
    def t_min(self):
        return self._t[0]

    @property
    def t_max(self):
        return self._t[-1] + self._h[-1]

    def __call__(self, t):
        if not self._t:
            raise ValueError("empty dense output")
        t = float(t)
        i = int(np.searchsorted(self._t, t, side="right")) - 1
        i = min(max(i, 0), len(self._t) - 1)
        return _interp(self._coef[i], (t - self._t[i]) / self._h[i])


def _interp(coef, theta):
    r1, r2, r3, r4, r5 = coef
    th1 = 1.0 - theta
    return r1 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)))


@dataclass
class TrajectoryRecord:
    """Sampled trajectory; ``y`` has shape ``(len(t), 2)``."""

    frame: Frame
    t: np.ndarray
    y: np.ndarray
    metadata: dict = field(default_factory=dict)
    dense: DenseOutput | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.y = np.asarray(self.y, dtype=float).reshape(len(self.t), -1)
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if self.t.size and self.y.shape[1] != 2:
            raise ValueError("state vectors must have two components")

    def __len__(self):
        return self.t.size

    @property
    def samples(self):
        return list(zip(self.t.tolist(), map(tuple, self.y.tolist())))

    def state_at(self, t):
        """State at ``t`` from dense output, else linear interpolation of samples."""
        if self.dense is not None:
            return self.dense(t)
        return np.array([np.interp(t, self.t, self.y[:, k]) for k in range(self.y.shape[1])])


@dataclass
class SolverResult:
    t: np.ndarray
    y: np.ndarray  # shape (len(t),) + y0.shape
    t_final: float
    y_final: np.ndarray
    n_steps: int
    n_rejected: int
    stopped: bool
    dense: DenseOutput | None = None


@dataclass(frozen=True)
class BatchGuard:
    """Rule for retiring batch members, checked after every accepted step.

    A member is retired when ``1 + y[0] < amp_min`` (the polar amplitude
    collapses), when ``y[k]`` leaves ``[box_lo[k], box_hi[k]]``, or, with
    ``ref_dev`` set, when it deviates from column 0 (the reference) by more
    than ``ref_dev[k]`` in component ``k``.  If the reference itself is
    retired, every member goes with it.
    """

    amp_min: float = -math.inf
    box_lo: tuple[float, float] = (-math.inf, -math.inf)
    box_hi: tuple[float, float] = (math.inf, math.inf)
    ref_dev: tuple[float, float] | None = None

    def as_array(self) -> np.ndarray:
        dev = self.ref_dev or (math.inf, math.inf)
        return np.array([self.amp_min, 1.0 if self.ref_dev else 0.0, *dev, *self.box_lo, *self.box_hi], dtype=float)

    def mask(self, y: np.ndarray) -> np.ndarray:
        return _guard_mask(np.asarray(y, dtype=float).reshape(2, -1), self.as_array())


@njit(cache=True)
def _guard_mask(y, g):
    n = y.shape[1]
    out = np.zeros(n, dtype=np.bool_)
    for j in range(n):
        if 1.0 + y[0, j] < g[0]:
            out[j] = True
        for k in range(2):
            if y[k, j] < g[4 + k] or y[k, j] > g[6 + k]:
                out[j] = True
    if g[1] > 0.0 and n > 0:
        if out[0]:
            out[:] = True
        else:
            for j in range(1, n):
                for k in range(2):
                    if abs(y[k, j] - y[k, 0]) > g[2 + k]:
                        out[j] = True
    return out


_OK, _BUDGET, _STIFF, _DIVERGED, _GUARD = 0, 1, 2, 3, 4


@njit(cache=True)
def _dopri_kernel(code, p, t0, t1, y0, rtol, atol, h, h_max, max_steps, t_eval, i_eval, ys, err_prev, guard):
    # compiled twin of the loop in ``solve``; y0 has shape (2, N)
    c2, c3, c4, c5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
    a21 = 1 / 5
    a31, a32 = 3 / 40, 9 / 40
    a41, a42, a43 = 44 / 45, -56 / 15, 32 / 9
    a51, a52, a53, a54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
    a61, a62, a63, a64, a65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
    b1, b3, b4, b5, b6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
    e1, e3, e4, e5, e6, e7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
    d1, d3, d4 = -12715105075 / 11282082432, 87487479700 / 32700410799, -10690763975 / 1880347072
    d5, d6, d7 = 701980252875 / 199316789632, -1453857185 / 822651844, 69997945 / 29380423
    eps = 2.220446049250313e-16
    use_guard = guard.shape[0] > 0

    n_eval = t_eval.shape[0]
    y = y0.copy()
    t = t0
    n_steps = 0
    n_rej = 0
    k1 = evaluate(code, t, y, p)
    if not np.all(np.isfinite(k1)):
        return t, y, n_steps, n_rej, 3, i_eval, h, err_prev
    rejected = False
    while t < t1:
        if n_steps >= max_steps:
            return t, y, n_steps, n_rej, 1, i_eval, h, err_prev
        if h < 1e-3 * eps * abs(t) or t + h == t:
            return t, y, n_steps, n_rej, 2, i_eval, h, err_prev
        last = t + h >= t1
        h_step = t1 - t if last else h
        k2 = evaluate(code, t + c2 * h_step, y + h_step * (a21 * k1), p)
        k3 = evaluate(code, t + c3 * h_step, y + h_step * (a31 * k1 + a32 * k2), p)
        k4 = evaluate(code, t + c4 * h_step, y + h_step * (a41 * k1 + a42 * k2 + a43 * k3), p)
        k5 = evaluate(code, t + c5 * h_step, y + h_step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), p)
        k6 = evaluate(code, t + h_step, y + h_step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), p)
        y_new = y + h_step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6)
        k7 = evaluate(code, t + h_step, y_new, p)
        if not (
            np.all(np.isfinite(k2))
            and np.all(np.isfinite(k3))
            and np.all(np.isfinite(k4))
            and np.all(np.isfinite(k5))
            and np.all(np.isfinite(k6))
            and np.all(np.isfinite(k7))
        ):
            return t, y, n_steps, n_rej, 3, i_eval, h, err_prev
        ev = h_step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.max(np.abs(ev) / sc)
        if err <= 1.0:
            n_steps += 1
            t_new = t1 if last else t + h_step
            if i_eval < n_eval and t_eval[i_eval] <= t_new:
                r2 = y_new - y
                r3 = h_step * k1 - r2
                r4 = r2 - h_step * k7 - r3
                r5 = h_step * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7)
                while i_eval < n_eval and t_eval[i_eval] <= t_new:
                    th = (t_eval[i_eval] - t) / h_step
                    th1 = 1.0 - th
                    ys[i_eval] = y + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)))
                    i_eval += 1
            fac = 0.9 * max(err, 1e-10) ** -(0.7 / 4) * err_prev ** (0.4 / 4)
            fac = min(5.0, max(0.2, fac))
            if rejected:
                fac = min(fac, 1.0)
            err_prev = max(err, 1e-4)
            t = t_new
            y = y_new
            k1 = k7
            rejected = False
            h = min(h_step * fac, h_max)
            if use_guard and t < t1:
                if np.any(_guard_mask(y, guard)):
                    return t, y, n_steps, n_rej, 4, i_eval, h, err_prev
        else:
            n_rej += 1
            rejected = True
            h = h_step * max(0.2, 0.9 * err ** -(0.7 / 4))
    return t, y, n_steps, n_rej, 0, i_eval, h, err_prev


def _initial_step(fun, t0, y0, f0, span, rtol, atol, h_max):
    # Hairer, Norsett & Wanner, Solving ODEs I, sec. II.4
    sc = atol + rtol * np.abs(y0)
    d0 = np.max(np.abs(y0) / sc)
    d1 = np.max(np.abs(f0) / sc)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, h_max, span)
    f1 = np.asarray(fun(t0 + h0, y0 + h0 * f0), dtype=float)
    d2 = np.max(np.abs(f1 - f0) / sc) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, h_max, span)


def _raise_for(status, t, y, cfg):
    if status == _BUDGET:
        raise BudgetError(f"max_steps={cfg.max_steps} exhausted at t={t:.17g}", t, y)
    if status == _STIFF:
        raise StiffnessError(f"step size underflow at t={t:.17g}", t, y)
    if status == _DIVERGED:
        raise DivergenceError(f"non-finite derivative at t={t:.17g}", t, y)


def _check_span(span, t_eval):
    t0, t1 = float(span[0]), float(span[1])
    if not t0 < t1:
        raise DomainError(f"integration span must satisfy t0 < t1, got {tuple(span)}")
    t_eval = np.asarray([] if t_eval is None else t_eval, dtype=float).ravel()
    if t_eval.size and (t_eval[0] < t0 or t_eval[-1] > t1 or np.any(np.diff(t_eval) < 0)):
        raise DomainError("sample times must be sorted and lie inside the span")
    return t0, t1, t_eval


def _first_step(fun, t0, t1, y, cfg):
    f = np.asarray(fun(t0, y), dtype=float)
    if not np.all(np.isfinite(f)):
        raise DivergenceError(f"non-finite derivative at t={t0:.17g}", t0, y)
    h_max = min(cfg.h_max, t1 - t0)
    h = cfg.h_init if cfg.h_init > 0 else _initial_step(fun, t0, y, f, t1 - t0, cfg.rtol, cfg.atol, h_max)
    return f, min(h, h_max), h_max


def _solve_jit(fun: JitField, span, y0, cfg, t_eval):
    t0, t1, t_eval = _check_span(span, t_eval)
    shape = np.shape(y0)
    y = np.array(y0, dtype=float).reshape(2, -1)
    _, h, h_max = _first_step(fun, t0, t1, y, cfg)
    ys = np.empty((t_eval.size,) + y.shape)
    i0 = int(np.searchsorted(t_eval, t0, side="right"))
    ys[:i0] = y
    t, y_last, n_steps, n_rej, status, n_out, _, _ = _dopri_kernel(
        fun.code, fun.params, t0, t1, y, cfg.rtol, cfg.atol, h, h_max, cfg.max_steps, t_eval, i0, ys, 1e-4, np.empty(0)
    )
    ys = ys[:n_out].reshape((n_out,) + shape)
    try:
        _raise_for(status, t, y_last.reshape(shape), cfg)
    except IntegrationError as exc:
        exc.partial = (t_eval[:n_out].copy(), ys)
        raise
    return SolverResult(t_eval[:n_out].copy(), ys, t, y_last.reshape(shape), n_steps, n_rej, False)


def solve(
    fun: Callable,
    span: tuple[float, float],
    y0,
    cfg: IntegratorConfig = IntegratorConfig(),
    t_eval: Sequence[float] | None = None,
    stop: Callable | None = None,
    keep_dense: bool = False,
) -> SolverResult:
    """Integrate ``y' = fun(t, y)`` over ``span`` (``t0 < t1``).

    ``stop(t, y)`` is consulted after every accepted step; a true result
    ends the integration early with ``stopped=True``.  Samples in
    ``t_eval`` beyond the stopping time are not produced.
    """
    if isinstance(fun, JitField) and stop is None and not keep_dense and np.shape(y0)[:1] == (2,):
        return _solve_jit(fun, span, y0, cfg, t_eval)
    out_t, out_y = [], []
    try:
        return _solve_py(fun, span, y0, cfg, t_eval, stop, keep_dense, out_t, out_y)
    except IntegrationError as exc:
        exc.partial = (np.array(out_t), np.array(out_y) if out_y else np.empty((0,) + np.shape(y0)))
        raise


def _solve_py(fun, span, y0, cfg, t_eval, stop, keep_dense, out_t, out_y):
    t0, t1, t_eval = _check_span(span, t_eval)
    y = np.array(y0, dtype=float)

    i_eval = 0
    while i_eval < t_eval.size and t_eval[i_eval] == t0:
        out_t.append(t0)
        out_y.append(y.copy())
        i_eval += 1

    f, h, h_max = _first_step(fun, t0, t1, y, cfg)
    dense = DenseOutput() if keep_dense else None
    err_prev = 1e-4
    t = t0
    n_steps = n_rejected = 0
    rejected = False
    stopped = False
    while t < t1:
        if n_steps >= cfg.max_steps:
            raise BudgetError(f"max_steps={cfg.max_steps} exhausted at t={t:.17g}", t, y)
        if h < 1e-3 * EPS * abs(t) or t + h == t:
            raise StiffnessError(f"step size underflow (h={h:.3e}) at t={t:.17g}", t, y)
        last = t + h >= t1
        h_step = t1 - t if last else h

        k = [f]
        for i in range(1, 7):
            a = _A[i]
            dy = a[0] * k[0]
            for j in range(1, i):
                if a[j]:
                    dy = dy + a[j] * k[j]
            yi = y + h_step * dy
            ki = np.asarray(fun(t + _C[i] * h_step, yi), dtype=float)
            if not np.all(np.isfinite(ki)):
                raise DivergenceError(f"non-finite derivative at t={t:.17g}", t, y)
            k.append(ki)
        y_new = yi

        err_vec = _E[0] * k[0]
        for j in range(2, 7):
            err_vec = err_vec + _E[j] * k[j]
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(h_step * err_vec) / scale)) if y.size else 0.0

        if err <= 1.0:
            n_steps += 1
            t_new = t1 if last else t + h_step
            if (i_eval < t_eval.size and t_eval[i_eval] <= t_new) or dense is not None:
                dd = _D[0] * k[0]
                for j in range(2, 7):
                    dd = dd + _D[j] * k[j]
                r2 = y_new - y
                r3 = h_step * k[0] - r2
                coef = (y, r2, r3, r2 - h_step * k[6] - r3, h_step * dd)
                if dense is not None:
                    dense.append(t, h_step, coef)
                j0 = i_eval
                while i_eval < t_eval.size and t_eval[i_eval] <= t_new:
                    i_eval += 1
                if i_eval > j0:
                    theta = ((t_eval[j0:i_eval] - t) / h_step).reshape((-1,) + (1,) * y.ndim)
                    out_t.extend(t_eval[j0:i_eval].tolist())
                    out_y.extend(_interp(coef, theta))
            fac = SAFETY * max(err, 1e-10) ** -PI_ALPHA * err_prev**PI_BETA
            fac = min(FAC_MAX, max(FAC_MIN, fac))
            if rejected:
                fac = min(fac, 1.0)
            err_prev = max(err, 1e-4)
            t, y, f = t_new, y_new, k[6]
            rejected = False
            h = min(h_step * fac, h_max)
            if stop is not None and t < t1 and stop(t, y):
                stopped = True
                break
        else:
            n_rejected += 1
            rejected = True
            h = h_step * max(FAC_MIN, SAFETY * err**-PI_ALPHA)

    ys = np.array(out_y) if out_y else np.empty((0,) + y.shape)
    return SolverResult(np.array(out_t), ys, t, y, n_steps, n_rejected, stopped, dense)


def integrate(
    rhs: Callable,
    y0,
    span: tuple[float, float],
    cfg: IntegratorConfig = IntegratorConfig(),
    sample_times: Sequence[float] | None = None,
    frame: Frame = Frame.SLOW,
    metadata: dict | None = None,
    dense: bool = False,
) -> TrajectoryRecord:
    """Integrate a two-component system and sample it at ``sample_times``."""
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (2,):
        raise DomainError(f"state vectors have two components, got shape {y0.shape}")
    res = solve(rhs, span, y0, cfg, sample_times, keep_dense=dense)
    meta = {"span": tuple(span), "y0": y0.tolist(), "config": cfg, "n_steps": res.n_steps}
    meta.update(metadata or {})
    return TrajectoryRecord(frame, res.t, res.y.reshape(len(res.t), 2), meta, res.dense)


def fixed_step_solve(fun: Callable, span: tuple[float, float], y0, n_steps: int) -> np.ndarray:
    """Propagate the fifth-order solution with ``n_steps`` equal steps."""
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    t0, t1 = map(float, span)
    h = (t1 - t0) / n_steps
    y = np.array(y0, dtype=float)
    for i in range(n_steps):
        t = t0 + i * h
        k = [np.asarray(fun(t, y), dtype=float)]
        for s in range(1, 6):
            dy = sum(_A[s][j] * k[j] for j in range(s))
            k.append(np.asarray(fun(t + _C[s] * h, y + h * dy), dtype=float))
        y = y + h * sum(_B[j] * k[j] for j in range(6))
    return y


def integrate_batch(
    fun: JitField,
    y0: np.ndarray,
    span: tuple[float, float],
    cfg: IntegratorConfig,
    sample_times: Sequence[float],
    guard: BatchGuard | None = None,
):
    """Integrate a batch ``y0`` of shape ``(2, N)`` sharing one step sequence.

    Members flagged by ``guard`` are retired at the end of the step that
    violated it; the rest continue with the step-size controller state
    intact.  Returns ``(Y, retired_at)`` where ``Y`` has shape
    ``(len(sample_times), 2, N)`` and holds NaN after retirement, and
    ``retired_at`` is the retirement time per member (NaN if never).
    """
    t0, t1, te = _check_span(span, sample_times)
    y = np.array(y0, dtype=float).reshape(2, -1)
    n = y.shape[1]
    Y = np.full((te.size, 2, n), np.nan)
    retired_at = np.full(n, np.nan)
    active = np.arange(n)
    g = guard.as_array() if guard is not None else np.empty(0)
    if guard is not None:
        m = guard.mask(y)
        retired_at[active[m]] = t0
        active, y = active[~m], y[:, ~m]
    if not active.size:
        return Y, retired_at
    i_eval = int(np.searchsorted(te, t0, side="right"))
    Y[:i_eval, :, active] = y
    _, h, h_max = _first_step(fun, t0, t1, y, cfg)
    err_prev = 1e-4
    t = t0
    budget = cfg.max_steps
    while True:
        ys = np.empty((te.size, 2, active.size))
        start = i_eval
        t, y, n_steps, _, status, i_eval, h, err_prev = _dopri_kernel(
            fun.code, fun.params, t, t1, y, cfg.rtol, cfg.atol, h, h_max, budget, te, i_eval, ys, err_prev, g
        )
        Y[start:i_eval, :, active] = ys[start:i_eval]
        budget -= n_steps
        if status != _GUARD:
            _raise_for(status, t, y, cfg)
            break
        m = guard.mask(y)
        retired_at[active[m]] = t
        active, y = active[~m], y[:, ~m]
        if not active.size:
            break
    return Y, retired_at


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    prefactor: float
    residual_rms: float
    window: tuple[float, float]


MIN_FIT_SAMPLES = 8


def fit_power_law(t, y, window: tuple[float, float] | None = None) -> PowerLawFit:
    """Least-squares line through ``(log t, log y)`` restricted to ``window``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is None:
        if t.size == 0:
            raise InsufficientDataError("no samples")
        window = (float(t.min()), float(t.max()))
    lo, hi = window
    if not lo < hi:
        raise DomainError(f"fit window must satisfy t_lo < t_hi, got {window}")
    sel = (t >= lo) & (t <= hi)
    ts, ys = t[sel], y[sel]
    if ts.size < MIN_FIT_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_FIT_SAMPLES} samples in window, got {ts.size}")
    if np.any(ts <= 0) or np.any(~(ys > 0)):
        raise DomainError("power-law fit needs positive t and y")
    lt, ly = np.log(ts), np.log(ys)
    slope, intercept = np.polyfit(lt, ly, 1)
    resid = ly - (slope * lt + intercept)
    return PowerLawFit(float(slope), float(np.exp(intercept)), float(np.sqrt(np.mean(resid**2))), (float(lo), float(hi)))


def detect_event(traj: TrajectoryRecord, predicate: Callable, direction: str = "any", rtol: float = 1e-10):
    """First sign change of ``predicate(t, y)`` along ``traj``.

    ``direction`` is ``"rising"`` (negative to non-negative), ``"falling"``
    or ``"any"``.  The bracketing sample pair is refined by bisection on
    the dense output, or on linear interpolation when the record has none.
    Returns ``(t, y)`` or ``None``.
    """
    if direction not in ("rising", "falling", "any"):
        raise ValueError(f"unknown direction {direction!r}")
    if len(traj) < 2:
        return None
    g = np.array([predicate(t, y) for t, y in zip(traj.t, traj.y)], dtype=float)
    rising = (g[:-1] < 0) & (g[1:] >= 0)
    falling = (g[:-1] > 0) & (g[1:] <= 0)
    hits = {"rising": rising, "falling": falling, "any": rising | falling}[direction]
    idx = np.flatnonzero(hits)
    if idx.size == 0:
        return None
    i = int(idx[0])
    lo, hi, glo = traj.t[i], traj.t[i + 1], g[i]
    tol = rtol * max(abs(lo), abs(hi), 1.0)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if np.sign(predicate(mid, traj.state_at(mid))) == np.sign(glo):
            lo = mid
        else:
            hi = mid
    return hi, traj.state_at(hi)
