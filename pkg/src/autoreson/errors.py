"""Exception hierarchy shared by all modules."""

from __future__ import annotations

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain where an equation is defined."""


class DegeneratePolarError(DomainError):
    """Polar coordinates are undefined (psi = 0 or 1 + rho <= 0)."""


class DegenerateForcingError(DomainError):
    """Zero forcing amplitude where a coefficient divides by it."""


class InsufficientDataError(ValueError):
    """Too few samples (or too short a span) for a fit or a classification."""


class IntegrationError(RuntimeError):
    """Base class for failures of the adaptive integrator.

    Carries the last accepted time and state, and ``partial``, the
    ``(t, y)`` samples produced before the failure when the solver knows
    them, so callers can flush partial output.
    """

    def __init__(self, message: str, t: float, y: np.ndarray | None = None):
        super().__init__(message)
        self.t = t
        self.y = None if y is None else np.array(y, copy=True)
        self.partial: tuple[np.ndarray, np.ndarray] | None = None


class StiffnessError(IntegrationError):
    """Step size underflow."""


class BudgetError(IntegrationError):
    """The step budget ``max_steps`` was exhausted."""


class DivergenceError(IntegrationError):
    """The right-hand side produced NaN or Inf."""


class EscapeError(RuntimeError):
    """A trajectory left the resonance neighbourhood it was meant to stay in."""

    def __init__(self, message: str, tau: float):
        super().__init__(message)
        self.tau = tau
