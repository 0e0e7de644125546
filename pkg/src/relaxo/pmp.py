"""Numerical checks of the maximum-principle necessary conditions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bloch import Trajectory
from .errors import InvalidArgument

STENCIL = 5


def hamiltonian(omega, theta, lambda_theta, lambda_a, R):
    """Control Hamiltonian ``-w^2/2 + l_th (w - R sin cos) - l_a R sin^2`` (maximised by the optimum)."""
    s, c = np.sin(theta), np.cos(theta)
    return -0.5 * omega**2 + lambda_theta * (omega - R * s * c) - lambda_a * R * s * s


def costate_rate(theta, lambda_theta, lambda_a, R):
    """Right-hand side of the theta-costate equation."""
    return lambda_theta * R * np.cos(2 * theta) + lambda_a * R * np.sin(2 * theta)


def lambda_a_from_kappa(kappa: float, R: float) -> float:
    return 0.5 * kappa**2 * R


def fd_derivative(t, y):
    """Fourth-order derivative estimate on a (possibly non-uniform) grid.

    Uses the 5-point stencil centred on each sample where possible and
    shifted one-sided near the ends. Weights come from the local
    Vandermonde system in offsets scaled by the stencil width.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n = t.size
    if n < STENCIL:
        raise InvalidArgument(f"need at least {STENCIL} samples for the difference stencil, got {n}")
    start = np.clip(np.arange(n) - STENCIL // 2, 0, n - STENCIL)
    idx = start[:, None] + np.arange(STENCIL)[None, :]
    scale = t[idx[:, -1]] - t[idx[:, 0]]
    x = (t[idx] - t[:, None]) / scale[:, None]
    # rows: sum_j w_j x_j^k = delta_{k,1}
    V = x[:, None, :] ** np.arange(STENCIL)[None, :, None]
    rhs = np.zeros((n, STENCIL))
    rhs[:, 1] = 1.0
    w = np.linalg.solve(V, rhs[..., None])[..., 0]
    return np.einsum("ij,ij->i", w, y[idx]) / scale


def adjoint_defect(traj: Trajectory, lambda_a: float, norm: str = "max") -> float:
    """Mismatch between the differenced costate and its ODE right-hand side.

    ``norm`` is ``"max"`` (worst case) or ``"rms"``.
    """
    if len(traj) < STENCIL:
        raise InvalidArgument(f"trajectory needs at least {STENCIL} samples, got {len(traj)}")
    d = fd_derivative(traj.t, traj.lambda_theta)
    r = np.abs(d - costate_rate(traj.theta, traj.lambda_theta, lambda_a, traj.params.R))
    if norm == "max":
        return float(r.max())
    if norm == "rms":
        return float(np.sqrt(np.mean(r**2)))
    raise InvalidArgument(f"unknown norm {norm!r}")


def stationarity_check(traj: Trajectory) -> float:
    """Largest ``|omega - lambda_theta|``; the optimum sets the control equal to the costate."""
    return float(np.max(np.abs(traj.omega - traj.lambda_theta)))


def lambda_a_at_crossing(traj: Trajectory) -> float:
    """``lambda_theta^2 / (2R)`` read off where theta passes pi/2 (linear interpolation)."""
    th = traj.theta
    k = int(np.searchsorted(th, np.pi / 2))
    if k >= th.size:
        raise InvalidArgument("trajectory never reaches theta = pi/2")
    if k == 0 or th[k] == np.pi / 2:
        lam = traj.lambda_theta[k]
    else:
        f = (np.pi / 2 - th[k - 1]) / (th[k] - th[k - 1])
        lam = (1 - f) * traj.lambda_theta[k - 1] + f * traj.lambda_theta[k]
    return float(lam**2 / (2 * traj.params.R))


@dataclass(frozen=True)
class CostateCheck:
    lambda_a: float
    residual_h: float
    residual_adjoint: float
    residual_stationarity: float
    rms_h: float = float("nan")
    rms_adjoint: float = float("nan")

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def check_trajectory(traj: Trajectory, lambda_a: float | None = None) -> CostateCheck:
    """All first-order residuals for ``traj``. ``lambda_a`` defaults to the value implied by ``traj.kappa``."""
    R = traj.params.R
    lam_a = lambda_a_from_kappa(traj.kappa, R) if lambda_a is None else lambda_a
    h = np.abs(hamiltonian(traj.omega, traj.theta, traj.lambda_theta, lam_a, R))
    return CostateCheck(
        lambda_a=lam_a,
        residual_h=float(h.max()),
        residual_adjoint=adjoint_defect(traj, lam_a),
        residual_stationarity=stationarity_check(traj),
        rms_h=float(np.sqrt(np.mean(h**2))),
        rms_adjoint=adjoint_defect(traj, lam_a, norm="rms"),
    )
