"""Closed-form minimum-energy pulses and quadrature cross-checks.

Optimal trajectories form a one-parameter family indexed by ``kappa``:

    omega(theta)   = R sin(theta) (cos(theta) + sqrt(cos(theta)^2 + kappa^2))
    dtheta/dt      = R sin(theta) sqrt(cos(theta)^2 + kappa^2)

``kappa`` is pinned by the magnitude loss ``r``. Durations keep the
``ln(eps)`` term and drop contributions that vanish with ``eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .bloch import PulseParams, PulseTarget
from .errors import InvalidArgument, NumericalError

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-12


@dataclass(frozen=True)
class AnalyticSolution:
    kappa: float
    duration: float
    energy: float
    params: PulseParams
    target: PulseTarget

    @property
    def lambda_a(self) -> float:
        return 0.5 * self.kappa**2 * self.params.R

    def as_dict(self) -> dict:
        return {
            "target": self.target.value,
            "R": self.params.R,
            "r": self.params.r,
            "eps": self.params.eps,
            "kappa": self.kappa,
            "duration": self.duration,
            "energy": self.energy,
            "lambda_a": self.lambda_a,
        }


def _check_ratio(r):
    if not (math.isfinite(r) and 0 < r < 1):
        raise InvalidArgument(f"r must lie in (0, 1), got {r}")


def kappa(target: PulseTarget, r: float) -> float:
    _check_ratio(r)
    if PulseTarget.parse(target) is PulseTarget.HalfPi:
        return 2 * r / (1 - r * r)
    return 2 * math.sqrt(r) / (1 - r)


def feedback_omega(theta, kappa: float, R: float):
    """Optimal control as a function of the polar angle (positive root)."""
    c = np.cos(theta)
    root = np.sqrt(c * c + kappa * kappa)
    # conjugate form avoids cancellation past the equator
    with np.errstate(divide="ignore", invalid="ignore"):
        branch = np.where(c >= 0, c + root, kappa * kappa / (root - c))
    out = R * np.sin(theta) * branch
    return float(out) if np.ndim(out) == 0 else out


def theta_rate(theta, kappa: float, R: float):
    """Optimal closed-loop angular speed ``dtheta/dt``."""
    c = np.cos(theta)
    out = R * np.sin(theta) * np.sqrt(c * c + kappa * kappa)
    return float(out) if np.ndim(out) == 0 else out


def _quad(f, lo, hi, what):
    res = integrate.quad(f, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=500, full_output=True)
    val, err, info = res[:3]
    # a 4th element (message) is only returned on trouble
    if len(res) > 3 and err > 10 * max(QUAD_EPSABS, QUAD_EPSREL * abs(val)):
        raise NumericalError(
            f"quadrature for {what} did not converge",
            {"interval": (lo, hi), "estimate": val, "abserr": err, "neval": info["neval"], "message": res[3]},
        )
    return val


def constraint_residual(kappa: float, target: PulseTarget, r: float, eps: float, method: str = "antiderivative") -> float:
    """Attenuation mismatch ``int sin/sqrt(cos^2+kappa^2) dtheta + ln r``.

    Negative means the trajectory loses less magnitude than requested.
    ``method="quadrature"`` is the numerical cross-check.
    """
    if not kappa > 0:
        raise InvalidArgument(f"kappa must be > 0, got {kappa}")
    target = PulseTarget.parse(target)
    theta_end = target.final_angle(eps)
    if method == "antiderivative":
        # d/dtheta asinh(cos(theta)/kappa) = -sin(theta)/sqrt(cos^2 + kappa^2)
        integral = math.asinh(math.cos(eps) / kappa) - math.asinh(math.cos(theta_end) / kappa)
    elif method == "quadrature":
        integral = _quad(lambda th: math.sin(th) / math.sqrt(math.cos(th) ** 2 + kappa**2), eps, theta_end, "constraint")
    else:
        raise InvalidArgument(f"unknown method {method!r}")
    return integral + math.log(r)


def duration(target: PulseTarget, params: PulseParams) -> float:
    R, r, eps = params.R, params.r, params.eps
    if PulseTarget.parse(target) is PulseTarget.HalfPi:
        return (1 / R) * (1 - r * r) / (1 + r * r) * (math.log((1 + r * r) / r) - math.log(eps))
    return (1 / R) * (1 - r) / (1 + r) * (math.log((1 + r) ** 2 / r) - 2 * math.log(eps))


def energy(target: PulseTarget, params: PulseParams) -> float:
    R, r = params.R, params.r
    if PulseTarget.parse(target) is PulseTarget.HalfPi:
        return R / (1 - r * r)
    return R * (1 + r) / (1 - r)


def _log_half(f, lo, hi, what):
    """Integrate ``f`` over ``[lo, hi]`` (0 < lo < hi) in the variable ``ln(theta)``."""
    return _quad(lambda s: f(math.exp(s)) * math.exp(s), math.log(lo), math.log(hi), what)


def _split_quadrature(f, eps, theta_end, what):
    # 1/theta-type endpoint behaviour at theta=eps and theta=pi-eps is tamed in log coordinates
    upper = min(theta_end, math.pi / 2)
    total = _log_half(f, eps, upper, what)
    if theta_end > math.pi / 2:
        total += _log_half(lambda psi: f(math.pi - psi), math.pi - theta_end, math.pi / 2, what)
    return total


def duration_quadrature(target: PulseTarget, params: PulseParams, kappa: float) -> float:
    """Transfer time as ``int dtheta / theta_rate`` over the regularised interval."""
    target = PulseTarget.parse(target)
    R = params.R
    f = lambda th: 1.0 / (R * math.sin(th) * math.sqrt(math.cos(th) ** 2 + kappa**2))  # noqa: E731
    return _split_quadrature(f, params.eps, target.final_angle(params.eps), "duration")


def energy_quadrature(target: PulseTarget, params: PulseParams, kappa: float) -> float:
    """Energy ``int omega^2 / (2 theta_rate) dtheta`` with the sin(theta) factor cancelled."""
    target = PulseTarget.parse(target)
    R, k2 = params.R, kappa**2

    def f(th):
        c = math.cos(th)
        s = math.sqrt(c * c + k2)
        return R * math.sin(th) * (c + s) ** 2 / (2 * s)

    return _quad(f, params.eps, target.final_angle(params.eps), "energy")


def solve(target: PulseTarget, params: PulseParams) -> AnalyticSolution:
    target = PulseTarget.parse(target)
    return AnalyticSolution(
        kappa=kappa(target, params.r),
        duration=duration(target, params),
        energy=energy(target, params),
        params=params,
        target=target,
    )
