"""Equations of the principal resonance problem and the maps between frames.

Three representations of the same dynamics are used throughout:

* the original frame, ``i Psi' + (|Psi|^2 - t) Psi = f`` with ``f = f1 t^(2 lam)``;
* the slow frame, ``psi(tau)`` with ``Psi = sqrt(t) exp(-i t^2/2) psi`` and
  ``tau = t^2/2``, where the drive becomes ``F tau^(-A) exp(i tau)``;
* the polar frame, ``psi = (1 + rho) exp(i (tau + alpha))``.

Scalar functions take and return Python numbers; the ``*_field`` factories
build vectorised right-hand sides for :mod:`autoreson.integrator`.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePolarError, DomainError
from .kernels import JitField, polar_kernel, primary_kernel, slow_kernel, unperturbed_kernel

ADMISSIBLE_LAMBDA = (-0.25, 0.75)


class Frame(str, enum.Enum):
    ORIGINAL = "original"
    SLOW = "slow"
    POLAR = "polar"
    CAPTURE = "capture"
    PENDULUM = "pendulum"


class PolarConvention(str, enum.Enum):
    """Sign of the forcing term in the amplitude equation of the polar system.

    ``PAPER`` keeps ``rho' = +F tau^-A sin(alpha) - ...`` as published and is
    the default everywhere.  ``DERIVED`` is what substituting the polar
    ansatz into the slow-frame equation actually produces
    (``-F tau^-A sin(alpha)``).  The two differ only in that sign.
    """

    PAPER = "paper"
    DERIVED = "derived"


@dataclass(frozen=True)
class ForcingLaw:
    """Power-law drive ``f = 2^(3/4) F tau^lam`` in slow time."""

    F: float
    lam: float

    def __post_init__(self):
        if not math.isfinite(self.F) or self.F < 0:
            raise DomainError(f"forcing amplitude F must be finite and >= 0, got {self.F}")
        if not math.isfinite(self.lam):
            raise DomainError(f"lambda must be finite, got {self.lam}")

    @classmethod
    def from_f1(cls, f1: float, lam: float) -> "ForcingLaw":
        return cls(f1_to_F(f1, lam), lam)

    @property
    def A(self) -> float:
        return 0.75 - self.lam

    @property
    def admissible(self) -> bool:
        return ADMISSIBLE_LAMBDA[0] < self.lam < ADMISSIBLE_LAMBDA[1]

    @property
    def f1(self) -> float:
        return self.F * 2.0 ** (0.75 - self.lam)

    def strength(self, tau):
        """Slow-frame drive amplitude ``F tau^(-A)``."""
        return self.F * np.power(tau, -self.A)

    def f_original(self, t):
        """Original-frame drive ``f1 t^(2 lam)``."""
        return self.f1 * np.power(t, 2.0 * self.lam)


@dataclass(frozen=True)
class ComplexState:
    value: complex
    time: float
    frame: Frame = Frame.SLOW

    def __post_init__(self):
        if self.frame not in (Frame.ORIGINAL, Frame.SLOW):
            raise DomainError(f"complex states live in the original or slow frame, not {self.frame}")
        if not self.time >= 0:
            raise DomainError(f"time must be >= 0, got {self.time}")


@dataclass(frozen=True)
class PolarState:
    rho: float
    alpha: float
    tau: float

    def __post_init__(self):
        if not 1.0 + self.rho > 0:
            raise DegeneratePolarError(f"1 + rho must be positive, got rho={self.rho}")

    @property
    def amplitude(self) -> float:
        return 1.0 + self.rho


@dataclass(frozen=True)
class UnperturbedParams:
    R: float
    a: float = 0.0

    def __post_init__(self):
        if self.R < 0:
            raise DomainError(f"R must be >= 0, got {self.R}")


def f1_to_F(f1: float, lam: float) -> float:
    """Convert the original-frame prefactor ``f1`` to the slow-frame ``F``.

    ``f1 t^(2 lam) = 2^(3/4) F tau^lam`` with ``tau = t^2/2`` gives
    ``F = f1 2^(lam - 3/4)``.
    """
    if f1 < 0:
        raise DomainError(f"f1 must be >= 0, got {f1}")
    return f1 * 2.0 ** (lam - 0.75)


def rhs_primary(t: float, psi: complex, f: complex) -> complex:
    """``Psi'`` from ``i Psi' + (|Psi|^2 - t) Psi = f``."""
    return -1j * f + 1j * (abs(psi) ** 2 - t) * psi


def to_slow(state: ComplexState) -> ComplexState:
    if state.frame is not Frame.ORIGINAL:
        raise DomainError("to_slow expects an original-frame state")
    t = state.time
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    psi = state.value * cmath.exp(0.5j * t * t) / math.sqrt(t)
    return ComplexState(psi, 0.5 * t * t, Frame.SLOW)


def from_slow(state: ComplexState) -> ComplexState:
    if state.frame is not Frame.SLOW:
        raise DomainError("from_slow expects a slow-frame state")
    tau = state.time
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    t = math.sqrt(2.0 * tau)
    return ComplexState(math.sqrt(t) * cmath.exp(-1j * tau) * state.value, t, Frame.ORIGINAL)


def slow_from_original_arrays(t, Psi):
    """Vectorised :func:`to_slow`: returns ``(tau, psi)`` arrays."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("t must be positive")
    return 0.5 * t * t, np.asarray(Psi) * np.exp(0.5j * t * t) / np.sqrt(t)


def slow_derivative_from_original(t: float, Psi: complex, dPsi: complex) -> complex:
    """``d psi / d tau`` implied by ``(Psi, dPsi/dt)`` at time ``t``.

    Differentiates ``psi = Psi exp(i t^2/2) / sqrt(t)`` and divides by
    ``dtau/dt = t``.
    """
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    phase = cmath.exp(0.5j * t * t)
    dpsi_dt = phase / math.sqrt(t) * (dPsi + (1j * t - 0.5 / t) * Psi)
    return dpsi_dt / t


def rhs_slow(tau: float, psi: complex, law: ForcingLaw) -> complex:
    """``psi'`` in slow time, drive ``F tau^-A e^(i tau)`` and ``-psi/(4 tau)`` damping."""
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    drive = law.F * tau ** (-law.A) * cmath.exp(1j * tau)
    return -1j * (drive - abs(psi) ** 2 * psi) - psi / (4.0 * tau)


def unperturbed_solution(params: UnperturbedParams, tau: float) -> complex:
    """General solution ``R exp(i (R^2 tau + a))`` of ``i psi' + |psi|^2 psi = 0``."""
    return params.R * cmath.exp(1j * (params.R**2 * tau + params.a))


def amplitude_rate(tau: float, psi: complex, law: ForcingLaw) -> float:
    """``d|psi|^2/dtau`` from the amplitude balance of the slow equation."""
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    f = 2.0**0.75 * law.F * tau**law.lam
    e = cmath.exp(1j * tau)
    cross = 1j * (f * psi / e - f * psi.conjugate() * e) / (2.0 * tau) ** 0.75
    return cross.real - abs(psi) ** 2 / (2.0 * tau)


def wrap_phase(x):
    """Reduce an angle into ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - x, 2.0 * np.pi)


def polar_from_complex(state: ComplexState) -> PolarState:
    if state.frame is not Frame.SLOW:
        raise DomainError("polar coordinates are defined in the slow frame")
    mod = abs(state.value)
    if mod == 0:
        raise DegeneratePolarError("psi = 0 has no polar representation")
    # rotating by exp(-i tau) first keeps full precision at large tau
    alpha = cmath.phase(state.value * cmath.exp(-1j * state.time))
    return PolarState(mod - 1.0, alpha, state.time)


def complex_from_polar(state: PolarState) -> ComplexState:
    value = (1.0 + state.rho) * cmath.exp(1j * state.tau) * cmath.exp(1j * state.alpha)
    return ComplexState(value, state.tau, Frame.SLOW)


def polar_arrays(tau, psi):
    """``(rho, alpha)`` along a sampled slow-frame trajectory.

    ``alpha`` is unwrapped continuously, starting on the ``(-pi, pi]``
    branch; samples must be dense enough that alpha moves by less than
    pi between neighbours.
    """
    tau = np.asarray(tau, dtype=float)
    psi = np.asarray(psi, dtype=complex)
    mod = np.abs(psi)
    if np.any(mod == 0):
        raise DegeneratePolarError("psi = 0 has no polar representation")
    raw = np.angle(psi * np.exp(-1j * tau))
    alpha = np.unwrap(raw) if raw.size else raw
    return mod - 1.0, alpha


def rhs_polar(state: PolarState, law: ForcingLaw, convention: PolarConvention = PolarConvention.PAPER):
    """``(rho', alpha')`` of the polar system solved for the derivatives."""
    tau = state.tau
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    amp = 1.0 + state.rho
    g = law.F * tau ** (-law.A)
    sign = 1.0 if PolarConvention(convention) is PolarConvention.PAPER else -1.0
    drho = sign * g * math.sin(state.alpha) - amp / (4.0 * tau)
    dalpha = state.rho * (2.0 + state.rho) - g * math.cos(state.alpha) / amp
    return drho, dalpha


def polar_pushforward(state: PolarState, law: ForcingLaw, h: float = 1e-6):
    """Independent oracle for the polar derivatives.

    Maps the state to ``psi``, takes a central-difference step along
    :func:`rhs_slow` in complex space, and reads ``(rho, alpha)`` back
    through :func:`polar_from_complex`.  It never touches :func:`rhs_polar`.
    """
    psi = complex_from_polar(state).value
    dpsi = rhs_slow(state.tau, psi, law)
    out = []
    for sgn in (1.0, -1.0):
        tau = state.tau + sgn * h
        out.append(polar_from_complex(ComplexState(psi + sgn * h * dpsi, tau, Frame.SLOW)))
    drho = (out[0].rho - out[1].rho) / (2 * h)
    dalpha = float(wrap_phase(out[0].alpha - out[1].alpha)) / (2 * h)
    return drho, dalpha


def sin_sign_discrepancy(state: PolarState, law: ForcingLaw) -> float:
    """``rho'`` difference between the published and the re-derived polar system.

    Equals ``2 F tau^-A sin(alpha)``; zero exactly on the resonance branches
    ``alpha = pi n``.
    """
    paper, _ = rhs_polar(state, law, PolarConvention.PAPER)
    derived, _ = rhs_polar(state, law, PolarConvention.DERIVED)
    return paper - derived


# ---------------------------------------------------------------------------
# fields for the integrator
#
# Each factory returns a JitField: calling it evaluates the numpy version
# (which also accepts a trailing batch axis), while the integrator runs
# single trajectories through the compiled kernel with the same arithmetic.


def primary_field(law: ForcingLaw) -> JitField:
    """Original frame; state ``(Re Psi, Im Psi)``."""
    return JitField(primary_kernel, np.array([law.f1, 2.0 * law.lam]))


def slow_field(law: ForcingLaw) -> JitField:
    """Slow frame; state ``(Re psi, Im psi)``."""
    return JitField(slow_kernel, np.array([law.F, law.A]))


def unperturbed_field() -> JitField:
    """``i psi' + |psi|^2 psi = 0``; state ``(Re psi, Im psi)``."""
    return JitField(unperturbed_kernel, np.zeros(1))


def polar_field(law: ForcingLaw, convention: PolarConvention = PolarConvention.PAPER) -> JitField:
    """Polar frame; state ``(rho, alpha)``."""
    sign = 1.0 if PolarConvention(convention) is PolarConvention.PAPER else -1.0
    return JitField(polar_kernel, np.array([law.F, law.A, sign]))
