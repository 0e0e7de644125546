"""Minimum-energy pi/2 and pi pulses for Bloch equations dominated by transverse relaxation."""

from .analytic import AnalyticSolution, energy, duration, feedback_omega, kappa, solve
from .bloch import (
    ControlWaveform,
    Magnetization,
    PulseParams,
    PulseTarget,
    SphericalState,
    Trajectory,
    cartesian_derivative,
    spherical_derivative,
    to_spherical,
)
from .errors import DomainError, IntegratorInstability, InvalidArgument, NumericalError, OptimizationFailure
from .trajectory import IntegratorConfig, integrate_optimal, simulate_cartesian, waveform_from_trajectory

__all__ = [
    "AnalyticSolution", "ControlWaveform", "DomainError", "IntegratorConfig", "IntegratorInstability",
    "InvalidArgument", "Magnetization", "NumericalError", "OptimizationFailure", "PulseParams", "PulseTarget",
    "SphericalState", "Trajectory", "cartesian_derivative", "duration", "energy", "feedback_omega",
    "integrate_optimal", "kappa", "simulate_cartesian", "solve", "spherical_derivative", "to_spherical",
    "waveform_from_trajectory",
]
__version__ = "0.1.0"
