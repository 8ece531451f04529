"""Closed-form asymptotics, free-agent potential and mode measurements."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientOscillationsError, InvalidParametersError
from .integrator import Trajectory
from .model import ModelParams, SystemState, Vec2


@dataclass(frozen=True)
class PursuitAsymptotics:
    delta_as: float
    v_as: float

    def to_dict(self) -> dict:
        return {"delta_as": self.delta_as, "v_as": self.v_as}


@dataclass(frozen=True)
class CircumventionAsymptotics:
    omega_as: float
    delta_ang: float
    period_s: float
    peak_times: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {"omega_as": self.omega_as, "delta_ang": self.delta_ang,
                "period_s": self.period_s, "peak_times": list(self.peak_times)}


def pursuit_asymptotics(params: ModelParams) -> PursuitAsymptotics:
    """Separation and common speed of the collinear pursuit equilibrium (kappa = 0)."""
    p = params
    den = p.nu_e * p.c_attract - p.nu_d * p.c_repel
    num = p.nu_e * (p.c_attract * p.delta_c**2 - p.c_circ * p.delta_1**4)
    if den <= 0:
        raise InvalidParametersError(
            "no pursuit equilibrium: need nu_e*c_attract > nu_d*c_repel")
    if num <= 0:
        raise InvalidParametersError(
            "no pursuit equilibrium: need c_attract*delta_c^2 > c_circ*delta_1^4")
    delta = math.sqrt(num / den)
    return PursuitAsymptotics(delta, p.c_repel / (p.nu_e * delta))


def equilibrium_state(params: ModelParams, direction=(1.0, 0.0),
                      evader=(0.0, 0.0), t: float = 0.0) -> SystemState:
    """Both agents moving at ``v_as`` along ``direction``, driver ``delta_as`` behind."""
    eq = pursuit_asymptotics(params)
    n = math.hypot(*direction)
    ux, uy = direction[0] / n, direction[1] / n
    ue = Vec2(*evader)
    ud = Vec2(ue.x - eq.delta_as * ux, ue.y - eq.delta_as * uy)
    v = Vec2(eq.v_as * ux, eq.v_as * uy)
    return SystemState(t, ud, ue, v, v)


def free_agent_potential(state: SystemState, params: ModelParams) -> float:
    r = math.hypot(state.u_d.x - state.u_e.x, state.u_d.y - state.u_e.y)
    if not r > 0:
        raise InvalidParametersError("potential undefined at zero separation")
    return (math.log(r) + params.m_d / (2 * params.c_attract) * state.v_d.dot(state.v_d)
            - params.m_e / (2 * params.c_repel) * state.v_e.dot(state.v_e))


def potential_derivative(state: SystemState, params: ModelParams) -> float:
    """Time derivative of :func:`free_agent_potential` once the far-field forces are dropped."""
    return (-(params.nu_d / params.c_attract) * state.v_d.dot(state.v_d)
            + (params.nu_e / params.c_repel) * state.v_e.dot(state.v_e))


def free_agent_mask(trajectory: Trajectory, params: ModelParams,
                    delta_free: float = 5.0) -> np.ndarray:
    """Samples that are far apart and whose evader is slow relative to the driver."""
    y = trajectory.states
    r = trajectory.separation()
    vd2 = (y[:, 4:6] ** 2).sum(axis=1)
    ve2 = (y[:, 6:8] ** 2).sum(axis=1)
    slow = (params.nu_e / params.c_repel) * ve2 <= (params.nu_d / params.c_attract) * vd2
    return (r >= delta_free) & slow


def check_lemma1(params: ModelParams) -> bool:
    return params.m_d / params.nu_d < params.m_e / params.nu_e


def _peaks(t: np.ndarray, y: np.ndarray) -> list[float]:
    out = []
    for i in range(1, len(y) - 1):
        if y[i] > y[i - 1] and y[i] >= y[i + 1]:
            den = y[i - 1] - 2 * y[i] + y[i + 1]
            h = t[i + 1] - t[i]
            shift = 0.5 * (y[i - 1] - y[i + 1]) / den if den != 0 else 0.0
            out.append(float(t[i] + shift * h))
    return out


def measure_circumvention(trajectory: Trajectory, t_window_start: float = 48.0,
                          t_window_end: float | None = None) -> CircumventionAsymptotics:
    """Period, angular speed and mean separation of a settled circumvention run.

    The period is the mean spacing of successive maxima of the driver's y
    coordinate, each refined by a parabola through three samples.
    """
    t = trajectory.times
    end = t[-1] if t_window_end is None else t_window_end
    sel = (t >= t_window_start) & (t <= end)
    tw = t[sel]
    peaks = _peaks(tw, trajectory.states[sel, 1])
    if len(peaks) < 3:
        raise InsufficientOscillationsError(
            f"found {len(peaks)} maxima in [{t_window_start}, {end}], need at least 3")
    period = float(np.mean(np.diff(peaks)))
    delta = float(np.mean(trajectory.separation()[sel]))
    return CircumventionAsymptotics(2 * math.pi / period, delta, period, tuple(peaks))
