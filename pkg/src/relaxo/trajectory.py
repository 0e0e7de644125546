"""Time-domain optimal trajectories, waveforms and Cartesian simulation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, interpolate, optimize

from . import analytic
from .bloch import ControlWaveform, Magnetization, PulseParams, PulseTarget, Trajectory, spherical_arrays
from .errors import IntegratorInstability, InvalidArgument, NumericalError

log = logging.getLogger(__name__)

STEPS_PER_PULSE = 40_000


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 by default. ``dt=None`` means duration estimate / 40000."""

    dt: float | None = None
    method: str = "rk4"
    tol: float = 1e-10
    max_steps: int = 5_000_000

    def __post_init__(self):
        if self.dt is not None and not (math.isfinite(self.dt) and self.dt > 0):
            raise InvalidArgument(f"dt must be > 0, got {self.dt}")
        if not self.tol > 0:
            raise InvalidArgument(f"tol must be > 0, got {self.tol}")
        if self.method not in ("rk4", "adaptive"):
            raise InvalidArgument(f"method must be 'rk4' or 'adaptive', got {self.method!r}")


def _rk4_theta_a(theta, a, h, control, R):
    """One RK4 step of the reduced (theta, a) dynamics under feedback ``control(theta)``."""

    def f(th):
        s, c = math.sin(th), math.cos(th)
        return control(th) - R * s * c, -R * s * s

    k1t, k1a = f(theta)
    k2t, k2a = f(theta + 0.5 * h * k1t)
    k3t, k3a = f(theta + 0.5 * h * k2t)
    k4t, k4a = f(theta + h * k3t)
    return (
        theta + h / 6 * (k1t + 2 * k2t + 2 * k3t + k4t),
        a + h / 6 * (k1a + 2 * k2a + 2 * k3a + k4a),
    )


def _march(control, R, theta0, theta_end, dt, max_steps, n_steps=None):
    """RK4 march. Stops before the step that would cross ``theta_end``,
    or after exactly ``n_steps`` steps if given.

    Returns the list of accepted (theta, a) states.
    """
    th, a = theta0, 0.0
    thetas, avals = [th], [a]
    limit = max_steps if n_steps is None else n_steps
    for _ in range(limit):
        nth, na = _rk4_theta_a(th, a, dt, control, R)
        if not (math.isfinite(nth) and math.isfinite(na)):
            raise IntegratorInstability("non-finite state in optimal-trajectory integration", {"theta": th, "a": a})
        if not 0.0 <= nth <= math.pi:
            raise IntegratorInstability("theta left [0, pi]", {"theta": nth, "step": len(thetas)})
        if n_steps is None and nth >= theta_end:
            return thetas, avals
        th, a = nth, na
        thetas.append(th)
        avals.append(a)
    if n_steps is None:
        raise NumericalError(
            "step cap exceeded before reaching the target angle",
            {"max_steps": max_steps, "theta": th, "theta_end": theta_end, "dt": dt},
        )
    return thetas, avals


def _locate(control, R, theta, a, theta_end, h_max):
    """Partial step length that lands exactly on ``theta_end`` from (theta, a)."""
    g = lambda tau: _rk4_theta_a(theta, a, tau, control, R)[0] - theta_end  # noqa: E731
    hi = h_max
    while g(hi) < 0:
        hi *= 2
        if hi > 64 * h_max:
            raise NumericalError("could not bracket the stopping angle", {"theta": theta, "theta_end": theta_end})
    tau = optimize.brentq(g, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return tau, _rk4_theta_a(theta, a, tau, control, R)


def integrate_feedback(control, R, theta0, theta_end, dt, max_steps=5_000_000):
    """Integrate under ``omega = control(theta)`` from ``theta0`` until ``theta_end``.

    A first pass locates the stopping time; a second pass re-marches on a
    grid of equal steps ending at that time, so the output is uniformly
    spaced (last gap equal to the others up to the event tolerance).
    Returns ``(t, theta, a)`` arrays.
    """
    thetas, avals = _march(control, R, theta0, theta_end, dt, max_steps)
    tau, _ = _locate(control, R, thetas[-1], avals[-1], theta_end, dt)
    t_stop = (len(thetas) - 1) * dt + tau
    n = max(1, math.ceil(t_stop / dt - 1e-9))
    h = t_stop / n
    thetas, avals = _march(control, R, theta0, theta_end, h, max_steps, n_steps=n - 1)
    tau, (th, a) = _locate(control, R, thetas[-1], avals[-1], theta_end, h)
    thetas.append(th)
    avals.append(a)
    t = np.arange(n + 1) * h
    t[-1] = (n - 1) * h + tau
    return t, np.array(thetas), np.array(avals)


def _integrate_adaptive(control, R, theta0, theta_end, dt, tol, t_max):
    def rhs(_, y):
        s, c = math.sin(y[0]), math.cos(y[0])
        return [control(y[0]) - R * s * c, -R * s * s]

    def hit(_, y):
        return y[0] - theta_end

    hit.terminal = True
    hit.direction = 1
    sol = integrate.solve_ivp(
        rhs, (0.0, t_max), [theta0, 0.0], method="DOP853", rtol=tol, atol=tol * 1e-3, events=hit, dense_output=True
    )
    if sol.status != 1:
        raise NumericalError("adaptive integration ended without reaching the target angle", {"message": sol.message})
    t_stop = float(sol.t_events[0][0])
    n = max(1, math.ceil(t_stop / dt - 1e-9))
    t = np.linspace(0.0, t_stop, n + 1)
    y = sol.sol(t)
    y[0, -1] = theta_end
    return t, y[0], y[1]


def integrate_optimal(target: PulseTarget, params: PulseParams, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Optimal trajectory from ``theta = eps`` to the target angle, sampled uniformly in time."""
    target = PulseTarget.parse(target)
    cfg = cfg or IntegratorConfig()
    R, eps = params.R, params.eps
    k = analytic.kappa(target, params.r)
    theta_end = target.final_angle(eps)
    dt = cfg.dt if cfg.dt is not None else analytic.duration(target, params) / STEPS_PER_PULSE

    control = lambda th: R * math.sin(th) * (math.cos(th) + math.sqrt(math.cos(th) ** 2 + k * k))  # noqa: E731
    if cfg.method == "rk4":
        t, theta, a = integrate_feedback(control, R, eps, theta_end, dt, cfg.max_steps)
    else:
        t_max = 10 * analytic.duration(target, params)
        t, theta, a = _integrate_adaptive(control, R, eps, theta_end, dt, cfg.tol, t_max)
    omega = analytic.feedback_omega(theta, k, R)
    log.debug("integrated %s: %d samples, T=%.12g, a(T)=%.12g", target.value, t.size, t[-1], a[-1])
    return Trajectory(
        t=t,
        theta=theta,
        a=a,
        omega=omega,
        lambda_theta=omega.copy(),
        params=params,
        target=target,
        kappa=k,
        meta={"dt": float(t[1] - t[0]) if t.size > 1 else dt, "method": cfg.method},
    )


def waveform_from_trajectory(traj: Trajectory, dt_out: float | None = None) -> ControlWaveform:
    """Resample the control onto a uniform grid with a monotone cubic (PCHIP).

    The grid spans the trajectory exactly, so the effective spacing is the
    largest value ``<= dt_out`` that divides the span (``dt_out`` itself
    when it already divides it to within 1e-6 of a step).
    """
    span = traj.duration
    if dt_out is None:
        dt_out = traj.meta.get("dt", span / max(1, len(traj) - 1))
    if not (dt_out > 0 and math.isfinite(dt_out)):
        raise InvalidArgument(f"dt_out must be > 0, got {dt_out}")
    if len(traj) < 2 or dt_out > span:
        raise InvalidArgument(f"dt_out={dt_out} exceeds the trajectory span {span}")
    ratio = span / dt_out
    n = round(ratio) if abs(ratio - round(ratio)) < 1e-6 else math.ceil(ratio)
    t_new = traj.t[0] + span * np.arange(n + 1) / n
    t_new[-1] = traj.t[-1]
    omega = interpolate.PchipInterpolator(traj.t, traj.omega)(t_new)
    omega[0], omega[-1] = traj.omega[0], traj.omega[-1]
    return ControlWaveform(t0=float(traj.t[0]), dt=span / n, omega=omega)


@dataclass(frozen=True, eq=False)
class CartesianRun:
    """Sampled Cartesian magnetization; ``m`` rows are ``[mx, my, mz]``."""

    t: np.ndarray
    m: np.ndarray
    m0: Magnetization

    @property
    def magnitude(self) -> np.ndarray:
        return np.linalg.norm(self.m, axis=1)

    def spherical(self):
        """``(a, theta, phi)`` arrays relative to the initial magnitude."""
        return spherical_arrays(self.m, self.m0.magnitude)

    @property
    def final_ratio(self) -> float:
        return float(self.magnitude[-1] / self.m0.magnitude)

    @property
    def final_theta(self) -> float:
        m = self.m[-1]
        return float(math.atan2(math.hypot(m[0], m[1]), m[2]))


def _cartesian_step(mx, my, mz, h, wx0, wy0, wxm, wym, wx1, wy1, R):
    def f(x, y, z, wx, wy):
        return -R * x - wy * z, -R * y + wx * z, wy * x - wx * y

    a1 = f(mx, my, mz, wx0, wy0)
    a2 = f(mx + 0.5 * h * a1[0], my + 0.5 * h * a1[1], mz + 0.5 * h * a1[2], wxm, wym)
    a3 = f(mx + 0.5 * h * a2[0], my + 0.5 * h * a2[1], mz + 0.5 * h * a2[2], wxm, wym)
    a4 = f(mx + h * a3[0], my + h * a3[1], mz + h * a3[2], wx1, wy1)
    return (
        mx + h / 6 * (a1[0] + 2 * a2[0] + 2 * a3[0] + a4[0]),
        my + h / 6 * (a1[1] + 2 * a2[1] + 2 * a3[1] + a4[1]),
        mz + h / 6 * (a1[2] + 2 * a2[2] + 2 * a3[2] + a4[2]),
    )


def simulate_cartesian(
    wave: ControlWaveform,
    m0: Magnetization | None = None,
    R: float = 1.0,
    cfg: IntegratorConfig | None = None,
    omega_y: ControlWaveform | None = None,
) -> CartesianRun:
    """Drive the Bloch equations with ``omega_x = wave`` (and ``omega_y``, zero by default).

    Steps are the waveform spacing, subdivided so that no step exceeds
    ``cfg.dt``; mid-step field values come from a PCHIP interpolant of the
    samples. Output is reported on the waveform grid.
    """
    m0 = m0 or Magnetization(0.0, 0.0, 1.0)
    cfg = cfg or IntegratorConfig()
    if not R > 0:
        raise InvalidArgument(f"R must be > 0, got {R}")
    n = len(wave)
    t = wave.times
    sub = 1 if cfg.dt is None else max(1, math.ceil(wave.dt / cfg.dt - 1e-9))
    h = wave.dt / sub
    fine = wave.t0 + h * np.arange(2 * sub * (n - 1) + 1) / 2

    def sampled(w):
        if w is None:
            return np.zeros(fine.size)
        if len(w) != n or abs(w.dt - wave.dt) > 1e-12 * wave.dt:
            raise InvalidArgument("omega_y must share the omega_x grid")
        if n == 1:
            return np.full(fine.size, w.omega[0])
        return interpolate.PchipInterpolator(t, w.omega)(fine)

    wx, wy = sampled(wave), sampled(omega_y)
    out = np.empty((n, 3))
    mx, my, mz = m0.mx, m0.my, m0.mz
    out[0] = mx, my, mz
    j = 0
    for i in range(1, n):
        for _ in range(sub):
            mx, my, mz = _cartesian_step(mx, my, mz, h, wx[j], wy[j], wx[j + 1], wy[j + 1], wx[j + 2], wy[j + 2], R)
            j += 2
        if not (math.isfinite(mx) and math.isfinite(my) and math.isfinite(mz)):
            raise IntegratorInstability("non-finite magnetization", {"step": i})
        out[i] = mx, my, mz
    return CartesianRun(t=t, m=out, m0=m0)


def simulate_cartesian_feedback(field, m0: Magnetization, R: float, t_end: float, dt: float) -> CartesianRun:
    """RK4 Cartesian simulation with a state-feedback field ``field(m) -> (omega_x, omega_y)``."""
    n = max(1, math.ceil(t_end / dt - 1e-9))
    h = t_end / n

    def f(m):
        wx, wy = field(m)
        return np.array([-R * m[0] - wy * m[2], -R * m[1] + wx * m[2], wy * m[0] - wx * m[1]])

    m = m0.as_array()
    out = np.empty((n + 1, 3))
    out[0] = m
    for i in range(n):
        k1 = f(m)
        k2 = f(m + 0.5 * h * k1)
        k3 = f(m + 0.5 * h * k2)
        k4 = f(m + h * k3)
        m = m + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(m)):
            raise IntegratorInstability("non-finite magnetization", {"step": i})
        out[i + 1] = m
    return CartesianRun(t=h * np.arange(n + 1), m=out, m0=m0)
