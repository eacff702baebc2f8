"""Leading-order autoresonant asymptotics and their numerical verification.

The decaying particular solution of the polar system behaves as

    rho*   ~ r tau^(-kappa),          kappa = A = 3/4 - lam
    alpha* ~ pi n + a tau^(-mu),      mu = 1 - A

with ``r = (-1)^n F / 2`` and ``a = (-1)^n / (4 F)``.  Higher corrections
sit on the exponent lattice ``chi(m, l) = A l + (1 - A) m``; only the
``(0, 0)`` coefficients are computed in closed form here, the rest is
checked indirectly through residual decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateForcingError, DomainError, EscapeError
from .integrator import IntegratorConfig, PowerLawFit, fit_power_law, solve
from .models import ForcingLaw, PolarConvention, PolarState, polar_field

ESCAPE_RHO = 0.5
ESCAPE_ALPHA = 1.0


class Exponents(NamedTuple):
    A: float
    kappa: float
    mu: float
    admissible: bool


def exponents(lam: float) -> Exponents:
    A = 0.75 - lam
    return Exponents(A, A, 1.0 - A, 0.0 < A < 1.0)


def lattice_exponent(m: int, l: int, A: float) -> float:
    """``chi(m, l) = A l + (1 - A) m``."""
    return A * l + (1.0 - A) * m


def leading_coefficients(F: float, n: int) -> tuple[float, float]:
    if n not in (0, 1):
        raise DomainError(f"parity n must be 0 or 1, got {n}")
    if F == 0:
        raise DegenerateForcingError("leading phase coefficient a = (-1)^n/(4F) is undefined for F = 0")
    s = (-1.0) ** n
    return s * F / 2.0, s / (4.0 * F)


@dataclass(frozen=True)
class AsymptoticProfile:
    law: ForcingLaw
    n: int = 1

    def __post_init__(self):
        if self.n not in (0, 1):
            raise DomainError(f"parity n must be 0 or 1, got {self.n}")
        if self.law.F <= 0:
            raise DegenerateForcingError("an asymptotic profile needs F > 0")

    @property
    def A(self) -> float:
        return self.law.A

    @property
    def kappa(self) -> float:
        return self.law.A

    @property
    def mu(self) -> float:
        return 1.0 - self.law.A

    @property
    def alpha0(self) -> float:
        return math.pi * self.n

    @property
    def r_lead(self) -> float:
        return leading_coefficients(self.law.F, self.n)[0]

    @property
    def a_lead(self) -> float:
        return leading_coefficients(self.law.F, self.n)[1]

    def rho(self, tau):
        return self.r_lead * np.power(tau, -self.kappa)

    def alpha(self, tau):
        return self.alpha0 + self.a_lead * np.power(tau, -self.mu)

    def drho(self, tau):
        return -self.kappa * self.r_lead * np.power(tau, -self.kappa - 1.0)

    def dalpha(self, tau):
        return -self.mu * self.a_lead * np.power(tau, -self.mu - 1.0)


def truncated_asymptote(profile: AsymptoticProfile, tau: float) -> PolarState:
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    return PolarState(float(profile.rho(tau)), float(profile.alpha(tau)), tau)


def residual_norm(profile: AsymptoticProfile, tau):
    """Defects of both polar equations evaluated on the truncated profile.

    ``res_rho = rho*' - (F tau^-A sin alpha* - (1 + rho*)/(4 tau))`` and
    ``res_alpha = -alpha*'(1 + rho*) - (1 + rho*) + (1 + rho*)^3 - F tau^-A cos alpha*``,
    with the derivatives of the truncation taken analytically.  Accepts
    scalar or array ``tau``.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise DomainError("tau must be positive")
    rho, alpha = profile.rho(tau), profile.alpha(tau)
    g = profile.law.F * np.power(tau, -profile.A)
    amp = 1.0 + rho
    res_rho = profile.drho(tau) - (g * np.sin(alpha) - amp / (4.0 * tau))
    # (1+rho)^3 - (1+rho) written without the cancelling unit terms
    res_alpha = -profile.dalpha(tau) * amp + amp * rho * (2.0 + rho) - g * np.cos(alpha)
    if res_rho.ndim == 0:
        return float(res_rho), float(res_alpha)
    return res_rho, res_alpha


def sample_grid(tau0: float, tau1: float, n: int = 2000) -> np.ndarray:
    return np.geomspace(tau0, tau1, n)


def integrate_from_asymptote(
    profile: AsymptoticProfile,
    tau0: float,
    tau1: float,
    cfg: IntegratorConfig,
    n_samples: int = 2000,
    convention: PolarConvention = PolarConvention.PAPER,
):
    """Polar trajectory started on the truncated asymptote; returns ``(tau, rho, alpha)``."""
    start = truncated_asymptote(profile, tau0)
    taus = sample_grid(tau0, tau1, n_samples)
    res = solve(polar_field(profile.law, convention), (tau0, tau1), [start.rho, start.alpha], cfg, taus)
    return res.t, res.y[:, 0], res.y[:, 1]


def period_average(tau, values, law: ForcingLaw, at, fine_step: float | None = None):
    """Average ``values`` over one local small-oscillation period around each ``at``.

    The period is ``2 pi / sqrt(2 F tau^-A)``, the linear libration period
    about the locked branch.  Samples are resampled linearly onto a uniform
    grid first; they must resolve that period.
    """
    tau = np.asarray(tau, dtype=float)
    values = np.asarray(values, dtype=float)
    at = np.asarray(at, dtype=float)
    period = 2.0 * np.pi / np.sqrt(2.0 * law.F * at ** (-law.A))
    step = fine_step or float(period.min()) / 50.0
    grid = np.arange(tau[0], tau[-1], step)
    v = np.interp(grid, tau, values)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * step)])
    lo = np.maximum(at - period / 2, grid[0])
    hi = np.minimum(at + period / 2, grid[-1])
    return (np.interp(hi, grid, cum) - np.interp(lo, grid, cum)) / (hi - lo)


def verify_exponents(
    law: ForcingLaw,
    n: int = 1,
    cfg: IntegratorConfig = IntegratorConfig(rtol=1e-10, atol=1e-13),
    tau0: float = 1e2,
    tau1: float = 1e5,
    window: tuple[float, float] | None = None,
    n_samples: int = 4000,
) -> tuple[PowerLawFit, PowerLawFit]:
    """Fit ``|rho|`` and ``|alpha - pi n|`` along a trajectory started on the asymptote.

    The default fit window is the last two decades of ``[tau0, tau1]``.
    Raises :class:`EscapeError` if the trajectory leaves the resonance
    neighbourhood ``|rho| <= 0.5``, ``|alpha - pi n| <= 1``.
    """
    if not law.admissible:
        raise DomainError(f"lambda={law.lam} is outside the admissible range")
    profile = AsymptoticProfile(law, n)
    tau, rho, alpha = integrate_from_asymptote(profile, tau0, tau1, cfg, n_samples)
    dev = alpha - profile.alpha0
    out = np.flatnonzero((np.abs(rho) > ESCAPE_RHO) | (np.abs(dev) > ESCAPE_ALPHA))
    if out.size:
        raise EscapeError(f"trajectory left the n={n} resonance neighbourhood", float(tau[out[0]]))
    if window is None:
        window = (tau1 / 100.0, tau1)
    return fit_power_law(tau, np.abs(rho), window), fit_power_law(tau, np.abs(dev), window)


def amplitude_ratio(profile: AsymptoticProfile, tau, rho):
    """``rho tau^kappa / r``; tends to one along the particular solution."""
    return np.asarray(rho) * np.power(tau, profile.kappa) / profile.r_lead
