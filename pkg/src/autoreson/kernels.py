"""Compiled vector fields shared by every frame.

All kernels take ``(t, y, p)`` with ``y`` of shape ``(2,)`` or ``(2, N)``
and a flat parameter array ``p``.  The integrator reaches them through
``evaluate``, which switches on an integer code; passing plain integers
instead of function objects keeps the compiled solver cacheable on disk.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit


@njit(cache=True)
def primary_kernel(t, y, p):
    f = p[0] * t ** p[1]
    w = y[0] * y[0] + y[1] * y[1] - t
    out = np.empty_like(y)
    out[0] = -w * y[1]
    out[1] = -f + w * y[0]
    return out


@njit(cache=True)
def slow_kernel(tau, y, p):
    g = p[0] * tau ** (-p[1])
    m2 = y[0] * y[0] + y[1] * y[1]
    out = np.empty_like(y)
    out[0] = g * np.sin(tau) - m2 * y[1] - y[0] / (4.0 * tau)
    out[1] = -g * np.cos(tau) + m2 * y[0] - y[1] / (4.0 * tau)
    return out


@njit(cache=True)
def unperturbed_kernel(tau, y, p):
    m2 = y[0] * y[0] + y[1] * y[1]
    out = np.empty_like(y)
    out[0] = -m2 * y[1]
    out[1] = m2 * y[0]
    return out


@njit(cache=True)
def polar_kernel(tau, y, p):
    # p = (F, A, sign of the sin term)
    g = p[0] * tau ** (-p[1])
    amp = 1.0 + y[0]
    out = np.empty_like(y)
    out[0] = p[2] * g * np.sin(y[1]) - amp / (4.0 * tau)
    out[1] = y[0] * (2.0 + y[0]) - g * np.cos(y[1]) / amp
    return out


@njit(cache=True)
def capture_kernel(s, y, p):
    # p = (F, 2 lam, delta, D); state (rho, alpha)
    F, two_lam, delta, D = p[0], p[1], p[2], p[3]
    force = (1.0 + delta * D * s) ** two_lam * F * np.sin(y[1])
    out = np.empty_like(y)
    out[0] = force
    out[1] = 2.0 * y[0] + D * s + delta * (y[0] * y[0] - force / (1.0 + delta * y[0]))
    return out


@njit(cache=True)
def pendulum_kernel(s, y, p):
    out = np.empty_like(y)
    out[0] = y[1]
    out[1] = p[0] * np.sin(y[0]) + p[1]
    return out


PRIMARY, SLOW, UNPERTURBED, POLAR, CAPTURE, PENDULUM = range(6)


@njit(cache=True)
def evaluate(code, t, y, p):
    if code == PRIMARY:
        return primary_kernel(t, y, p)
    if code == SLOW:
        return slow_kernel(t, y, p)
    if code == UNPERTURBED:
        return unperturbed_kernel(t, y, p)
    if code == POLAR:
        return polar_kernel(t, y, p)
    if code == CAPTURE:
        return capture_kernel(t, y, p)
    return pendulum_kernel(t, y, p)


_CODES = {
    primary_kernel: PRIMARY,
    slow_kernel: SLOW,
    unperturbed_kernel: UNPERTURBED,
    polar_kernel: POLAR,
    capture_kernel: CAPTURE,
    pendulum_kernel: PENDULUM,
}


@dataclass(frozen=True, eq=False)
class JitField:
    """Right-hand side ``kernel(t, y, params)`` compiled with numba.

    ``y`` has shape ``(2,)`` or ``(2, N)``.  Calling the field runs the
    uncompiled Python body of the same kernel.
    """

    kernel: Callable
    params: np.ndarray

    def __post_init__(self):
        if self.kernel not in _CODES:
            raise ValueError("unknown kernel")
        object.__setattr__(self, "params", np.ascontiguousarray(self.params, dtype=float))

    @property
    def code(self) -> int:
        return _CODES[self.kernel]

    def __call__(self, t, y):
        return self.kernel.py_func(t, np.asarray(y, dtype=float), self.params)


@njit(cache=True)
def _primary_kernel(t, y, p):
    f = p[0] * t ** p[1]
    w = y[0] * y[0] + y[1] * y[1] - t
    out = np.empty_like(y)
    out[0] = -w * y[1]
    out[1] = -f + w * y[0]
    return out


@njit(cache=True)
def _slow_kernel(tau, y, p):
    g = p[0] * tau ** (-p[1])
    m2 = y[0] * y[0] + y[1] * y[1]
    out = np.empty_like(y)
    out[0] = g * np.sin(tau) - m2 * y[1] - y[0] / (4.0 * tau)
    out[1] = -g * np.cos(tau) + m2 * y[0] - y[1] / (4.0 * tau)
    return out


@njit(cache=True)
def _unperturbed_kernel(tau, y, p):
    m2 = y[0] * y[0] + y[1] * y[1]
    out = np.empty_like(y)
    out[0] = -m2 * y[1]
    out[1] = m2 * y[0]
    return out


@njit(cache=True)
def _polar_kernel(tau, y, p):
    # p = (F, A, sign of the sin term)
    g = p[0] * tau ** (-p[1])
    amp = 1.0 + y[0]
    out = np.empty_like(y)
    out[0] = p[2] * g * np.sin(y[1]) - amp / (4.0 * tau)
    out[1] = y[0] * (2.0 + y[0]) - g * np.cos(y[1]) / amp
    return out
