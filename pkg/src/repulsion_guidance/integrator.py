"""Fixed-step time integration, control sources and trajectory records."""

from __future__ import annotations

import bisect
import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from . import _kernels as K
from .errors import (DegenerateSeparationError, InvalidParametersError, NoCrossingError,
                     NonFiniteStateError)
from .model import DEFAULT_SEPARATION_FLOOR, Kappa, ModelParams, Scenario, SystemState, Vec2

METHODS = {"explicit-euler": K.EULER, "fixed-rk4": K.RK4}

CSV_HEADER = ("t", "udx", "udy", "uex", "uey", "vdx", "vdy", "vex", "vey", "kappa", "r")


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-3
    method: str = "fixed-rk4"
    record_stride: int = 10
    separation_floor: float = DEFAULT_SEPARATION_FLOOR

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParametersError(f"dt must be positive, got {self.dt}")
        if self.method not in METHODS:
            raise InvalidParametersError(
                f"method must be one of {sorted(METHODS)}, got {self.method!r}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise InvalidParametersError(
                f"record_stride must be a positive integer, got {self.record_stride}")
        if self.separation_floor < 0:
            raise InvalidParametersError("separation_floor must be nonnegative")

    @classmethod
    def paper_faithful(cls, dt: float = 1e-5, record_stride: int = 1000) -> "StepperConfig":
        """Explicit Euler at a small step, as in the original study."""
        return cls(dt=dt, method="explicit-euler", record_stride=record_stride)

    @property
    def method_code(self) -> int:
        return METHODS[self.method]

    def is_regression_grade(self) -> bool:
        return self.dt <= 1e-3 and self.record_stride * self.dt <= 0.1 + 1e-12


class Schedule:
    """Piecewise-constant control: ``kappa`` holds from each start time to the next."""

    def __init__(self, entries: Sequence[tuple[float, int]]):
        if not entries:
            raise InvalidParametersError("schedule needs at least one entry")
        times = [float(t) for t, _ in entries]
        kappas = [int(Kappa.coerce(k)) for _, k in entries]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidParametersError("schedule breakpoints must be strictly increasing")
        self.times = times
        self.kappas = kappas

    @classmethod
    def constant(cls, kappa: int, t0: float = 0.0) -> "Schedule":
        return cls([(t0, kappa)])

    @property
    def entries(self) -> list[tuple[float, int]]:
        return list(zip(self.times, self.kappas))

    def kappa_at(self, t: float) -> int:
        i = bisect.bisect_right(self.times, t) - 1
        return self.kappas[max(i, 0)]

    def transitions(self) -> list[tuple[float, int]]:
        """Entries with consecutive duplicates removed."""
        out = [(self.times[0], self.kappas[0])]
        for t, k in zip(self.times[1:], self.kappas[1:]):
            if k != out[-1][1]:
                out.append((t, k))
        return out

    def segments(self, t0: float, tf: float) -> list[tuple[float, float, int]]:
        """Nonzero stretches of the control clipped to ``[t0, tf]``."""
        out = []
        tr = self.transitions()
        for (ta, k), nxt in zip(tr, tr[1:] + [(math.inf, 0)]):
            a = max(ta, t0)
            b = min(nxt[0], tf)
            if k != 0 and b > a:
                out.append((a, b, k))
        return out

    def mirrored(self) -> "Schedule":
        return Schedule([(t, -k) for t, k in self.entries])

    def arrays(self, t0: float) -> tuple[np.ndarray, np.ndarray]:
        times = list(self.times)
        if times[0] > t0:
            times = [t0] + times
            kappas = [0] + self.kappas
        else:
            kappas = list(self.kappas)
        return np.array(times, dtype=np.float64), np.array(kappas, dtype=np.float64)

    def __eq__(self, other):
        return isinstance(other, Schedule) and self.transitions() == other.transitions()

    def __repr__(self):
        return f"Schedule({self.entries!r})"


@runtime_checkable
class FeedbackRule(Protocol):
    """State-to-kappa map evaluated at the start of every step."""

    def __call__(self, state: SystemState, prev_kappa: int) -> int: ...


ControlSource = "Schedule | FeedbackRule | int"  # accepted by simulate()


@dataclass
class TrajectoryEvents:
    t_hit: float | None = None
    min_target_dist: tuple[float, float] = (math.inf, math.nan)
    t_b: float | None = None
    realized_schedule: list[tuple[float, int]] = field(default_factory=list)
    # shooting diagnostics
    t_alpha_negative: float | None = None
    min_dist_after_tb: tuple[float, float] = (math.inf, math.nan)
    alpha_at_closest: float | None = None
    alpha_final: float = math.nan
    # boundedness diagnostics over every step
    max_separation: float = math.nan
    min_separation: float = math.nan
    max_speed: float = math.nan

    def to_dict(self) -> dict:
        def opt(x):
            return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x

        return {
            "t_hit": opt(self.t_hit),
            "min_target_dist": {"t": opt(self.min_target_dist[1]),
                                "distance": opt(self.min_target_dist[0])},
            "t_b": opt(self.t_b),
            "realized_schedule": [{"t": t, "kappa": k} for t, k in self.realized_schedule],
            "max_separation": opt(self.max_separation),
            "min_separation": opt(self.min_separation),
            "max_speed": opt(self.max_speed),
        }


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    kappas: np.ndarray
    events: TrajectoryEvents
    target: Vec2 | None = None

    def __len__(self):
        return len(self.times)

    @property
    def samples(self) -> list[tuple[SystemState, Kappa]]:
        return [(SystemState.from_array(t, y), Kappa(int(k)))
                for t, y, k in zip(self.times, self.states, self.kappas)]

    def state(self, i: int) -> SystemState:
        return SystemState.from_array(self.times[i], self.states[i])

    @property
    def final(self) -> SystemState:
        return self.state(-1)

    def separation(self) -> np.ndarray:
        d = self.states[:, 0:2] - self.states[:, 2:4]
        return np.hypot(d[:, 0], d[:, 1])

    def speed(self, agent: str = "e") -> np.ndarray:
        cols = {"d": slice(4, 6), "e": slice(6, 8)}[agent]
        v = self.states[:, cols]
        return np.hypot(v[:, 0], v[:, 1])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            r = self.separation()
            for t, y, k, ri in zip(self.times, self.states, self.kappas, r):
                w.writerow([_fmt(t), *(_fmt(v) for v in y), int(k), _fmt(ri)])

    def events_json(self) -> str:
        return json.dumps(self.events.to_dict(), indent=2)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def read_trajectory_csv(path) -> Trajectory:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trajectory(rows[:, 0], rows[:, 1:9], rows[:, 9].astype(int), TrajectoryEvents())


def step(state: SystemState, params: ModelParams, kappa: int, dt: float,
         method: str = "fixed-rk4", floor: float = DEFAULT_SEPARATION_FLOOR) -> SystemState:
    """One explicit Euler or classical RK4 step."""
    _check_state(state, floor)
    y = state.as_array()
    K.advance(y, float(Kappa.coerce(kappa)), params.as_array(), float(dt), METHODS[method],
              np.empty((5, 8)))
    new = SystemState.from_array(state.t + dt, y)
    _check_state(new, floor)
    return new


def _check_state(state: SystemState, floor: float) -> None:
    if not state.is_finite():
        raise NonFiniteStateError(state.t, state)
    r = math.hypot(state.u_d.x - state.u_e.x, state.u_d.y - state.u_e.y)
    if r < floor:
        raise DegenerateSeparationError(state.t, r, state)


def _raise_status(status: int, t: float, y) -> None:
    if status == K.STATUS_DEGENERATE:
        st = SystemState.from_array(t, y)
        raise DegenerateSeparationError(t, math.hypot(y[0] - y[2], y[1] - y[3]), st)
    if status == K.STATUS_NONFINITE:
        raise NonFiniteStateError(t, SystemState.from_array(t, y))


def _nan_to_none(x: float) -> float | None:
    return None if math.isnan(x) else float(x)


def simulate(scenario: Scenario, control, config: StepperConfig | None = None, *,
             early_exit: bool = False, tf: float | None = None) -> Trajectory:
    """Integrate ``scenario`` from ``t0`` to ``tf`` under ``control``.

    ``control`` is a :class:`Schedule`, a kappa value (constant control) or
    a :class:`FeedbackRule`. Rules that provide ``kernel_spec`` run in the
    compiled loop; any other callable is evaluated from Python.
    """
    config = config or StepperConfig()
    tf = scenario.tf if tf is None else tf
    if isinstance(control, (int, Kappa)):
        control = Schedule.constant(int(control), scenario.t0)
    if isinstance(control, Schedule):
        return _simulate_schedule(scenario, control, config, early_exit, tf)
    spec = getattr(control, "kernel_spec", None)
    if spec is not None:
        return _simulate_compiled_rule(scenario, control, config, tf)
    if callable(control):
        return _simulate_python_rule(scenario, control, config, early_exit, tf)
    raise TypeError(f"unsupported control source: {control!r}")


def _simulate_schedule(scenario, schedule, config, early_exit, tf):
    bp_t, bp_k = schedule.arrays(scenario.t0)
    tx, ty = scenario.target
    status, t_end, y, rt, ry, rk, ev = K.integrate_schedule(
        scenario.initial.as_array(), float(scenario.t0), float(tf), scenario.params.as_array(),
        bp_t, bp_k, float(config.dt), config.method_code, int(config.record_stride),
        float(tx), float(ty), float(scenario.rho), float(config.separation_floor),
        bool(early_exit))
    _raise_status(status, t_end, y)
    realized = [(t, k) for t, k in Schedule(list(zip(bp_t, bp_k.astype(int)))).transitions()
                if t <= t_end]
    events = TrajectoryEvents(
        t_hit=_nan_to_none(ev[2]),
        min_target_dist=(float(ev[0]), float(ev[1])),
        t_b=_nan_to_none(ev[3]),
        realized_schedule=[(float(t), int(k)) for t, k in realized],
        t_alpha_negative=_nan_to_none(ev[4]),
        min_dist_after_tb=(float(ev[5]), float(ev[6])),
        alpha_at_closest=_nan_to_none(ev[7]),
        alpha_final=float(ev[8]),
        max_separation=float(ev[9]), min_separation=float(ev[10]), max_speed=float(ev[11]),
    )
    return Trajectory(rt.copy(), ry.copy(), rk.copy(), events, scenario.target)


def _simulate_compiled_rule(scenario, rule, config, tf):
    res = rule.kernel_spec().run(scenario, config, tf)
    return res.trajectory


def _simulate_python_rule(scenario, rule, config, early_exit, tf):
    """Reference loop for arbitrary rules; slow but general."""
    p = scenario.params.as_array()
    method = config.method_code
    work = np.empty((5, 8))
    y = scenario.initial.as_array()
    t0 = scenario.t0
    tx, ty = scenario.target
    n = int(math.ceil((tf - t0) / config.dt - 1e-9))
    times, states, kappas = [], [], []
    transitions: list[tuple[float, int]] = []
    prev = 0
    t = t0
    t_hit = None
    best = (math.hypot(y[2] - tx, y[3] - ty), t0)
    t_b = None
    rmax = rmin = math.hypot(y[0] - y[2], y[1] - y[3])
    vmax = max(math.hypot(y[4], y[5]), math.hypot(y[6], y[7]))
    _check_state(SystemState.from_array(t, y), config.separation_floor)
    for i in range(n + 1):
        state = SystemState.from_array(t, y)
        kappa = int(Kappa.coerce(rule(state, prev)))
        if not transitions or kappa != transitions[-1][1]:
            transitions.append((t, kappa))
        prev = kappa
        if i % config.record_stride == 0 or i == n:
            times.append(t)
            states.append(y.copy())
            kappas.append(kappa)
        if i == n:
            break
        t_next = min(t0 + (i + 1) * config.dt, tf)
        yp = y.copy()
        K.advance(y, float(kappa), p, t_next - t, method, work)
        t_prev, t = t, t_next
        _raise_status(K._state_ok(y, config.separation_floor), t, y)
        s, d = K._chord_closest(yp[2], yp[3], y[2], y[3], tx, ty)
        if d < best[0]:
            best = (d, t_prev + s * (t - t_prev))
        if t_hit is None and d < scenario.rho:
            t_hit = t
        if t_b is None and y[6] < 0:
            t_b = t
        r = math.hypot(y[0] - y[2], y[1] - y[3])
        rmax, rmin = max(rmax, r), min(rmin, r)
        vmax = max(vmax, math.hypot(y[4], y[5]), math.hypot(y[6], y[7]))
        if early_exit and t_hit is not None:
            times.append(t)
            states.append(y.copy())
            kappas.append(kappa)
            break
    events = TrajectoryEvents(t_hit=t_hit, min_target_dist=best, t_b=t_b,
                              realized_schedule=transitions, alpha_final=float(K.alpha(y, tx, ty)),
                              max_separation=rmax, min_separation=rmin, max_speed=vmax)
    return Trajectory(np.array(times), np.array(states), np.array(kappas, dtype=int), events,
                      scenario.target)


def refine_event_time(trajectory: Trajectory, predicate: Callable[[SystemState], object]) -> float:
    """Time at which ``predicate`` first changes along the recorded samples.

    A numeric predicate is treated as a signed function and its zero is
    located by linear interpolation between the bracketing samples; a
    boolean predicate yields the first sample where the value flips.
    """
    prev_val = None
    prev_t = None
    for i in range(len(trajectory)):
        st = trajectory.state(i)
        val = predicate(st)
        if prev_val is not None:
            if isinstance(val, (bool, np.bool_)):
                if bool(val) != bool(prev_val):
                    return float(st.t)
            else:
                a, b = float(prev_val), float(val)
                if (a < 0) != (b < 0):
                    if b == a:
                        return float(st.t)
                    return float(prev_t + (st.t - prev_t) * (a / (a - b)))
        prev_val, prev_t = val, st.t
    raise NoCrossingError("predicate does not change value along the trajectory")
