"""Domain types and Bloch dynamics with transverse relaxation only.

Storage order for magnetization is always ``(mx, my, mz)``. Rates are
returned in named fields of :class:`Magnetization`, so no code indexes a
bare triple by position.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidArgument

DEFAULT_EPS = 1e-3


class PulseTarget(enum.Enum):
    HalfPi = "pi2"
    Pi = "pi"

    @classmethod
    def parse(cls, value: "str | PulseTarget") -> "PulseTarget":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"pi2": cls.HalfPi, "halfpi": cls.HalfPi, "pi/2": cls.HalfPi, "pi": cls.Pi}
        try:
            return aliases[key]
        except KeyError:
            raise InvalidArgument(f"unknown pulse target {value!r}; use 'pi2' or 'pi'") from None

    def final_angle(self, eps: float) -> float:
        """Terminal polar angle: pi/2 exactly, or pi - eps for the inversion pulse."""
        return math.pi / 2 if self is PulseTarget.HalfPi else math.pi - eps


@dataclass(frozen=True)
class PulseParams:
    """Relaxation rate ``R``, magnitude ratio ``r = M(T)/M(0)``, endpoint angle ``eps``."""

    R: float = 1.0
    r: float = 0.6
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        for name in ("R", "r", "eps"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgument(f"{name} must be finite")
        if not self.R > 0:
            raise InvalidArgument(f"R must be > 0, got {self.R}")
        if not 0 < self.r < 1:
            raise InvalidArgument(f"r must lie in (0, 1), got {self.r}")
        if not 0 < self.eps < math.pi / 4:
            raise InvalidArgument(f"eps must lie in (0, pi/4), got {self.eps}")

    def with_(self, **changes) -> "PulseParams":
        vals = {"R": self.R, "r": self.r, "eps": self.eps}
        vals.update(changes)
        return PulseParams(**vals)


@dataclass(frozen=True)
class Magnetization:
    mx: float
    my: float
    mz: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.mx, self.my, self.mz)):
            raise InvalidArgument("magnetization components must be finite")

    @property
    def magnitude(self) -> float:
        return math.sqrt(self.mx * self.mx + self.my * self.my + self.mz * self.mz)

    def as_array(self) -> np.ndarray:
        return np.array([self.mx, self.my, self.mz])


@dataclass(frozen=True)
class SphericalState:
    """Log relative magnitude ``a = ln(M/M0)`` and polar angle ``theta``."""

    a: float
    theta: float


@dataclass(frozen=True, eq=False)
class ControlWaveform:
    """Uniformly sampled control ``omega`` starting at ``t0`` with spacing ``dt``."""

    t0: float
    dt: float
    omega: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        if omega.ndim != 1 or omega.size == 0:
            raise InvalidArgument("waveform needs a non-empty 1-D sample sequence")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise InvalidArgument(f"waveform dt must be > 0, got {self.dt}")
        if not np.all(np.isfinite(omega)):
            raise InvalidArgument("waveform samples must be finite")
        object.__setattr__(self, "omega", omega)

    def __len__(self):
        return self.omega.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.omega.size)

    @property
    def duration(self) -> float:
        return self.dt * (self.omega.size - 1)

    def energy(self) -> float:
        """Trapezoidal estimate of the integral of omega^2 / 2."""
        return float(np.trapezoid(0.5 * self.omega**2, dx=self.dt))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-sampled optimal (or candidate) trajectory, stored column-wise."""

    t: np.ndarray
    theta: np.ndarray
    a: np.ndarray
    omega: np.ndarray
    lambda_theta: np.ndarray
    params: PulseParams
    target: PulseTarget
    kappa: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        cols = [np.asarray(getattr(self, k), dtype=float) for k in ("t", "theta", "a", "omega", "lambda_theta")]
        n = cols[0].size
        if n == 0 or any(c.shape != (n,) for c in cols):
            raise InvalidArgument("trajectory columns must be equal-length non-empty 1-D arrays")
        if n > 1 and not np.all(np.diff(cols[0]) > 0):
            raise InvalidArgument("trajectory times must be strictly increasing")
        for k, c in zip(("t", "theta", "a", "omega", "lambda_theta"), cols):
            object.__setattr__(self, k, c)

    def __len__(self):
        return self.t.size

    @property
    def records(self):
        return list(zip(self.t, self.theta, self.a, self.omega, self.lambda_theta))

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def energy(self) -> float:
        return float(np.trapezoid(0.5 * self.omega**2, self.t))


def _check_finite(*values):
    if not all(math.isfinite(v) for v in values):
        raise InvalidArgument("inputs must be finite")


def cartesian_derivative(m: Magnetization, omega_x: float, omega_y: float, R: float) -> Magnetization:
    """Right-hand side of the rotating-frame Bloch equations without T1.

    Returns the rates as a :class:`Magnetization` whose fields hold
    ``dMx/dt``, ``dMy/dt`` and ``dMz/dt``.
    """
    _check_finite(omega_x, omega_y, R)
    if not R > 0:
        raise InvalidArgument(f"R must be > 0, got {R}")
    dmz = omega_y * m.mx - omega_x * m.my
    dmx = -R * m.mx - omega_y * m.mz
    dmy = -R * m.my + omega_x * m.mz
    return Magnetization(dmx, dmy, dmz)


def cartesian_rhs(m: np.ndarray, omega_x: float, omega_y: float, R: float) -> np.ndarray:
    """Array form of :func:`cartesian_derivative` for integrators, ``m = [mx, my, mz]``."""
    mx, my, mz = m
    return np.array([-R * mx - omega_y * mz, -R * my + omega_x * mz, omega_y * mx - omega_x * my])


def to_spherical(m: Magnetization, m0: float = 1.0) -> tuple[SphericalState, float]:
    """Map a magnetization vector to ``(SphericalState(a, theta), phi)``.

    ``theta`` uses ``atan2`` with the transverse norm first, so it lies in
    ``[0, pi]`` and is unambiguous in the lower hemisphere.
    """
    if not m0 > 0:
        raise InvalidArgument(f"reference magnitude m0 must be > 0, got {m0}")
    mag = m.magnitude
    if mag == 0.0:
        raise DomainError("polar angle undefined for zero magnetization")
    perp = math.hypot(m.mx, m.my)
    theta = math.atan2(perp, m.mz)
    phi = math.atan2(m.my, m.mx)
    return SphericalState(a=math.log(mag / m0), theta=theta), phi


def from_spherical(s: SphericalState, phi: float, m0: float = 1.0) -> Magnetization:
    """Inverse of :func:`to_spherical`."""
    mag = m0 * math.exp(s.a)
    st = math.sin(s.theta)
    return Magnetization(mag * st * math.cos(phi), mag * st * math.sin(phi), mag * math.cos(s.theta))


def spherical_arrays(m: np.ndarray, m0: float = 1.0):
    """Vectorised ``(a, theta, phi)`` for an ``(n, 3)`` array of ``[mx, my, mz]`` rows."""
    m = np.asarray(m, dtype=float)
    perp = np.hypot(m[:, 0], m[:, 1])
    mag = np.sqrt(perp**2 + m[:, 2] ** 2)
    if np.any(mag == 0):
        raise DomainError("polar angle undefined for zero magnetization")
    return np.log(mag / m0), np.arctan2(perp, m[:, 2]), np.arctan2(m[:, 1], m[:, 0])


def spherical_derivative(s: SphericalState, omega: float, R: float) -> tuple[float, float]:
    """Rates ``(da/dt, dtheta/dt)`` of the reduced dynamics under transverse control ``omega``."""
    _check_finite(s.a, s.theta, omega, R)
    if not R > 0:
        raise InvalidArgument(f"R must be > 0, got {R}")
    st, ct = math.sin(s.theta), math.cos(s.theta)
    return -R * st * st, omega - R * st * ct
