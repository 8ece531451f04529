"""Driver-evader model: parameter sets, states and the force laws."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .errors import DegenerateSeparationError, InvalidParametersError

DEFAULT_SEPARATION_FLOOR = 1e-6


class Vec2(NamedTuple):
    x: float
    y: float

    def __add__(self, other):  # type: ignore[override]
        return Vec2(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return Vec2(self.x - other[0], self.y - other[1])

    def __neg__(self):
        return Vec2(-self.x, -self.y)

    def __mul__(self, k):  # type: ignore[override]
        return Vec2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return Vec2(self.x / k, self.y / k)

    def dot(self, other) -> float:
        return self.x * other[0] + self.y * other[1]

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def mirrored(self) -> "Vec2":
        """Reflection across the x-axis."""
        return Vec2(self.x, -self.y)


ZERO = Vec2(0.0, 0.0)


def perp(v) -> Vec2:
    """Rotate by +90 degrees: ``(x, y) -> (-y, x)``."""
    return Vec2(-v[1], v[0])


class Kappa(IntEnum):
    """Control value: clockwise, off, counterclockwise circumvention."""

    CW = -1
    OFF = 0
    CCW = 1

    @classmethod
    def coerce(cls, value) -> "Kappa":
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"kappa must be one of -1, 0, 1, got {value!r}")
        try:
            return cls(int(value))
        except ValueError:
            raise ValueError(f"kappa must be one of -1, 0, 1, got {value!r}") from None


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the two-agent system.

    ``c_attract`` scales the attraction-repulsion the evader exerts on the
    driver, ``c_repel`` the repulsion the driver exerts on the evader and
    ``c_circ`` the circumvention force.
    """

    m_d: float = 0.4
    m_e: float = 1.0
    nu_d: float = 1.0
    nu_e: float = 2.0
    c_attract: float = 3.0
    c_repel: float = 2.0
    c_circ: float = 0.5
    delta_c: float = 2.0
    delta_1: float = 2.0
    delta_2: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise InvalidParametersError(f"{f.name} must be finite, got {v!r}")
        for name in ("m_d", "m_e", "nu_d", "nu_e", "c_attract", "c_repel",
                     "delta_c", "delta_1", "delta_2"):
            if getattr(self, name) <= 0:
                raise InvalidParametersError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.c_circ < 0:
            raise InvalidParametersError(f"c_circ must be nonnegative, got {self.c_circ!r}")

    @classmethod
    def paper_default(cls) -> "ModelParams":
        return cls()

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidParametersError(f"unknown parameter keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    def to_dict(self) -> dict:
        return asdict(self)

    def as_array(self) -> np.ndarray:
        return np.array([self.m_d, self.m_e, self.nu_d, self.nu_e, self.c_attract,
                         self.c_repel, self.c_circ, self.delta_c, self.delta_1, self.delta_2],
                        dtype=np.float64)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    # invariants that only some analyses require
    def has_short_range_repulsion(self) -> bool:
        return self.c_circ * self.delta_1**4 - self.c_attract * self.delta_c**2 < 0

    def has_lemma1_balance(self) -> bool:
        return self.m_d / self.nu_d < self.m_e / self.nu_e

    def has_pursuit_equilibrium(self) -> bool:
        return self.nu_e * self.c_attract > self.nu_d * self.c_repel

    def check_invariants(self) -> list[str]:
        """Names of the model invariants that this parameter set violates."""
        failed = []
        if not self.has_short_range_repulsion():
            failed.append("short-range repulsion: c_circ*delta_1^4 < c_attract*delta_c^2")
        if not self.has_lemma1_balance():
            failed.append("mass/friction balance: m_d/nu_d < m_e/nu_e")
        if not self.has_pursuit_equilibrium():
            failed.append("pursuit equilibrium: nu_e*c_attract > nu_d*c_repel")
        return failed


@dataclass(frozen=True)
class SystemState:
    t: float
    u_d: Vec2
    u_e: Vec2
    v_d: Vec2 = ZERO
    v_e: Vec2 = ZERO

    def __post_init__(self):
        for name in ("u_d", "u_e", "v_d", "v_e"):
            v = getattr(self, name)
            if not isinstance(v, Vec2):
                object.__setattr__(self, name, Vec2(float(v[0]), float(v[1])))

    def as_array(self) -> np.ndarray:
        return np.array([*self.u_d, *self.u_e, *self.v_d, *self.v_e], dtype=np.float64)

    @classmethod
    def from_array(cls, t: float, y) -> "SystemState":
        return cls(float(t), Vec2(float(y[0]), float(y[1])), Vec2(float(y[2]), float(y[3])),
                   Vec2(float(y[4]), float(y[5])), Vec2(float(y[6]), float(y[7])))

    def mirrored(self) -> "SystemState":
        return SystemState(self.t, self.u_d.mirrored(), self.u_e.mirrored(),
                           self.v_d.mirrored(), self.v_e.mirrored())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_array())))


@dataclass(frozen=True)
class StateDerivative:
    du_d: Vec2
    du_e: Vec2
    dv_d: Vec2
    dv_e: Vec2

    def as_array(self) -> np.ndarray:
        return np.array([*self.du_d, *self.du_e, *self.dv_d, *self.dv_e], dtype=np.float64)


@dataclass(frozen=True)
class Scenario:
    """A parameter set, an initial state and a target ball."""

    params: ModelParams
    initial: SystemState
    target: Vec2
    rho: float = 1e-4
    t0: float = 0.0
    tf: float = 100.0

    def __post_init__(self):
        if not isinstance(self.target, Vec2):
            object.__setattr__(self, "target", Vec2(float(self.target[0]), float(self.target[1])))
        if not self.t0 < self.tf:
            raise InvalidParametersError(f"need t0 < tf, got t0={self.t0}, tf={self.tf}")
        if self.rho < 0:
            raise InvalidParametersError(f"rho must be nonnegative, got {self.rho}")
        if self.initial.t != self.t0:
            object.__setattr__(self, "initial", replace(self.initial, t=self.t0))

    @classmethod
    def paper(cls, tf: float = 100.0, rho: float = 1e-4, target=(1.0, 1.0)) -> "Scenario":
        """Initial configuration used for all the reported runs."""
        return cls(ModelParams.paper_default(),
                   SystemState(0.0, Vec2(-6.0, 0.0), Vec2(6.0, 0.0)),
                   Vec2(*target), rho=rho, t0=0.0, tf=tf)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def mirrored(self) -> "Scenario":
        return replace(self, initial=self.initial.mirrored(), target=self.target.mirrored())

    def is_aligned(self) -> bool:
        """True if the line through driver and evader meets the target ball."""
        d = self.initial.u_e - self.initial.u_d
        w = self.target - self.initial.u_d
        n = d.norm()
        if n == 0:
            return True
        return abs(d.x * w.y - d.y * w.x) / n <= self.rho


def separation(state: SystemState) -> float:
    return math.hypot(state.u_d.x - state.u_e.x, state.u_d.y - state.u_e.y)


def _checked_offset(state: SystemState, floor: float):
    d = state.u_d - state.u_e
    r = d.norm()
    if not r >= floor:
        raise DegenerateSeparationError(state.t, r, state)
    return d, r


def driver_accel(state: SystemState, params: ModelParams, kappa: int,
                 floor: float = DEFAULT_SEPARATION_FLOOR) -> Vec2:
    """Driver acceleration assembled force by force.

    Sum of the attraction-repulsion exerted by the evader, the
    circumvention force (collinear part plus the kappa-weighted lateral
    part) and ground friction, divided by the driver mass.
    """
    kappa = Kappa.coerce(kappa)
    d, r = _checked_offset(state, floor)
    p = params
    r2 = r * r
    attraction = d * (-p.c_attract / r2 * (1.0 - p.delta_c**2 / r2))
    circumvention = (d - perp(d) * (kappa * p.delta_2 / r)) * (-p.c_circ * p.delta_1**4 / r2**2)
    friction = state.v_d * (-p.nu_d)
    return (attraction + circumvention + friction) / p.m_d


def driver_accel_modal(state: SystemState, params: ModelParams, kappa: int,
                       floor: float = DEFAULT_SEPARATION_FLOOR) -> Vec2:
    """Driver acceleration regrouped into a radial and a kappa-controlled lateral term.

    Algebraically identical to :func:`driver_accel`; this is the form the
    compiled integrator evaluates.
    """
    kappa = Kappa.coerce(kappa)
    d, r = _checked_offset(state, floor)
    p = params
    r2 = r * r
    radial = d * (-(p.c_attract / p.m_d) / r2
                  * (1.0 + (p.c_circ / p.c_attract * p.delta_1**4 - p.delta_c**2) / r2))
    lateral = perp(d) * (kappa * p.delta_1**4 * p.delta_2 / r**3 * (p.c_circ / p.m_d) / r2)
    return radial + lateral - state.v_d * (p.nu_d / p.m_d)


def evader_accel(state: SystemState, params: ModelParams,
                 floor: float = DEFAULT_SEPARATION_FLOOR) -> Vec2:
    d, r = _checked_offset(state, floor)
    return ((-d) * (params.c_repel / (r * r)) - state.v_e * params.nu_e) / params.m_e


def derivatives(state: SystemState, params: ModelParams, kappa: int,
                floor: float = DEFAULT_SEPARATION_FLOOR) -> StateDerivative:
    return StateDerivative(state.v_d, state.v_e,
                           driver_accel_modal(state, params, kappa, floor),
                           evader_accel(state, params, floor))
