"""Simulation and verification of autoresonant solutions of the principal
resonance equation with power-law forcing ``f = f1 t^(2 lam)``."""

__version__ = "0.1.0"

from .asymptotics import AsymptoticProfile, exponents, residual_norm, truncated_asymptote, verify_exponents
from .capture import (
    CaptureFrame,
    CaptureVerdict,
    PendulumParams,
    Region,
    Verdict,
    capture_frame,
    capture_scan,
    classify_trajectory,
    inside_separatrix,
    pendulum_energy,
    pendulum_fixed_points,
    rhs_capture,
)
from .integrator import IntegratorConfig, TrajectoryRecord, fit_power_law, integrate, solve
from .models import ComplexState, ForcingLaw, Frame, PolarConvention, PolarState, from_slow, rhs_polar, rhs_slow, to_slow
from .stability import StabilityReport, stability_experiment

__all__ = [
    "AsymptoticProfile",
    "CaptureFrame",
    "CaptureVerdict",
    "ComplexState",
    "ForcingLaw",
    "Frame",
    "IntegratorConfig",
    "PendulumParams",
    "PolarConvention",
    "PolarState",
    "Region",
    "StabilityReport",
    "TrajectoryRecord",
    "Verdict",
    "capture_frame",
    "capture_scan",
    "classify_trajectory",
    "exponents",
    "fit_power_law",
    "from_slow",
    "inside_separatrix",
    "integrate",
    "pendulum_energy",
    "pendulum_fixed_points",
    "residual_norm",
    "rhs_capture",
    "rhs_polar",
    "rhs_slow",
    "solve",
    "stability_experiment",
    "to_slow",
    "truncated_asymptote",
    "verify_exponents",
]
