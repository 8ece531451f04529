"""Closed-loop circumvention law, run harness and multi-target path following.

The law looks at which side of the driver-evader line the target lies on
(the alignment ``a``) and circumvents in that direction until the target
is nearly on the line ahead of the evader, at which point it switches
off. It is dormant while the driver is far from the evader.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import InvalidParametersError
from .integrator import Schedule, StepperConfig, Trajectory, TrajectoryEvents, _raise_status
from .model import Kappa, ModelParams, Scenario, SystemState, Vec2
from .openloop import CostBreakdown

REASONS = {K.REASON_INITIAL: "initial", K.REASON_FAR: "far", K.REASON_ALIGNED: "aligned",
           K.REASON_ACTIVE: "active", K.REASON_OVERRIDE: "override"}


@dataclass(frozen=True)
class OverrideWindow:
    """Forces ``kappa`` on ``[t_start, t_end)``; the law resumes afterwards."""

    t_start: float
    t_end: float
    kappa: int

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise InvalidParametersError(
                f"override window needs t_start < t_end, got {self.t_start}, {self.t_end}")
        object.__setattr__(self, "kappa", int(Kappa.coerce(self.kappa)))


@dataclass(frozen=True)
class FeedbackConfig:
    """Tuning of the feedback law.

    ``sample_period`` is the interval at which the law is re-evaluated and
    then held; 0 evaluates it on every integration step.
    """

    a_bar: float = 0.4
    far_factor: float = 1.5
    rho_reach: float = 0.2
    sign_fallback: str | int = "previous"
    sample_period: float = 0.01
    overrides: tuple[OverrideWindow, ...] = ()
    stop_on_arrival: bool = True

    def __post_init__(self):
        if not self.a_bar > 0:
            raise InvalidParametersError(f"a_bar must be positive, got {self.a_bar}")
        if not self.far_factor >= 1:
            raise InvalidParametersError(f"far_factor must be >= 1, got {self.far_factor}")
        if not self.rho_reach > 0:
            raise InvalidParametersError(f"rho_reach must be positive, got {self.rho_reach}")
        if self.sign_fallback not in ("previous", 1, -1):
            raise InvalidParametersError(
                f"sign_fallback must be 'previous', 1 or -1, got {self.sign_fallback!r}")
        if self.sample_period < 0:
            raise InvalidParametersError("sample_period must be nonnegative")
        ovs = tuple(o if isinstance(o, OverrideWindow) else OverrideWindow(*o)
                    for o in self.overrides)
        object.__setattr__(self, "overrides", ovs)

    @property
    def fallback_code(self) -> int:
        return K.FALLBACK_PREVIOUS if self.sign_fallback == "previous" else int(self.sign_fallback)

    def mirrored(self) -> "FeedbackConfig":
        fb = self.sign_fallback if self.sign_fallback == "previous" else -int(self.sign_fallback)
        return FeedbackConfig(self.a_bar, self.far_factor, self.rho_reach, fb,
                              self.sample_period,
                              tuple(OverrideWindow(o.t_start, o.t_end, -o.kappa)
                                    for o in self.overrides),
                              self.stop_on_arrival)


def alignment_a(state: SystemState, target) -> float:
    """Positive when the target lies to the left of the driver-to-evader line."""
    return ((target[0] - state.u_d.x) * (state.u_d.y - state.u_e.y)
            + (target[1] - state.u_d.y) * (state.u_e.x - state.u_d.x))


def same_side(state: SystemState, target) -> float:
    """Negative when the evader sits between driver and target (loosely)."""
    return ((state.u_e.x - target[0]) * (state.u_e.x - state.u_d.x)
            + (state.u_e.y - target[1]) * (state.u_e.y - state.u_d.y))


def chi_far(state: SystemState, params: ModelParams, far_factor: float = 1.5) -> int:
    r = math.hypot(state.u_d.x - state.u_e.x, state.u_d.y - state.u_e.y)
    return 0 if r**3 > far_factor * params.delta_2 else 1


def feedback_kappa(state: SystemState, target, params: ModelParams,
                   config: FeedbackConfig | None = None, prev_kappa: int = 0) -> Kappa:
    """Evaluate the law once. ``prev_kappa`` only matters when ``a`` is exactly 0."""
    config = config or FeedbackConfig()
    if chi_far(state, params, config.far_factor) == 0:
        return Kappa.OFF
    a = alignment_a(state, target)
    if abs(a) <= config.a_bar and same_side(state, target) < 0:
        return Kappa.OFF
    if a > 0:
        return Kappa.CCW
    if a < 0:
        return Kappa.CW
    if config.sign_fallback == "previous":
        return Kappa(prev_kappa) if prev_kappa != 0 else Kappa.CCW
    return Kappa(int(config.sign_fallback))


@dataclass(frozen=True)
class Transition:
    t: float
    kappa: int
    reason: str
    a: float
    same_side: float
    r: float
    target_index: int

    def to_dict(self) -> dict:
        return {"t": self.t, "kappa": self.kappa, "reason": self.reason, "a": self.a,
                "same_side": self.same_side, "r": self.r, "target_index": self.target_index}


@dataclass
class FeedbackRunResult:
    trajectory: Trajectory
    segments: list[tuple[float, float, int]]
    cost: CostBreakdown
    per_target_hits: list[tuple[int, float]]
    transitions: list[Transition] = field(default_factory=list)
    targets: list[Vec2] = field(default_factory=list)
    t_end: float = math.nan

    @property
    def unreached(self) -> list[int]:
        hit = {i for i, _ in self.per_target_hits}
        return [i for i in range(len(self.targets)) if i not in hit]

    @property
    def arrived(self) -> bool:
        return not self.unreached

    @property
    def schedule(self) -> Schedule:
        return Schedule([(tr.t, tr.kappa) for tr in self.transitions])

    def to_dict(self) -> dict:
        return {
            "arrived": self.arrived,
            "t_end": self.t_end,
            "cost": self.cost.to_dict(),
            "segments": [{"t_start": a, "t_end": b, "kappa": k} for a, b, k in self.segments],
            "per_target_hits": [{"index": i, "t": t} for i, t in self.per_target_hits],
            "unreached": self.unreached,
            "transitions": [tr.to_dict() for tr in self.transitions],
        }


class FeedbackLaw:
    """The law bound to a target and parameter set, usable as a control source.

    Calling it evaluates the law in Python (every step, no sampling);
    :func:`simulate` instead uses the compiled loop via ``kernel_spec``.
    """

    def __init__(self, target, params: ModelParams, config: FeedbackConfig | None = None):
        self.target = Vec2(float(target[0]), float(target[1]))
        self.params = params
        self.config = config or FeedbackConfig()
        self._last_sign = 1

    def __call__(self, state: SystemState, prev_kappa: int) -> int:
        if prev_kappa != 0:
            self._last_sign = int(prev_kappa)
        return int(feedback_kappa(state, self.target, self.params, self.config,
                                  self._last_sign))

    def kernel_spec(self) -> "_CompiledFeedback":
        return _CompiledFeedback([self.target], self.config)


@dataclass
class _CompiledFeedback:
    targets: list[Vec2]
    config: FeedbackConfig

    def run(self, scenario: Scenario, stepper: StepperConfig, tf: float) -> FeedbackRunResult:
        return _run(scenario, self.targets, self.config, stepper, tf)


def _segments(transitions: list[Transition], t_end: float) -> list[tuple[float, float, int]]:
    out = []
    for cur, nxt in zip(transitions, transitions[1:] + [None]):
        b = t_end if nxt is None else nxt.t
        if cur.kappa != 0 and b > cur.t:
            out.append((cur.t, b, cur.kappa))
    return out


def _run(scenario: Scenario, targets, config: FeedbackConfig, stepper: StepperConfig,
         tf: float) -> FeedbackRunResult:
    tg = np.array([[float(t[0]), float(t[1])] for t in targets], dtype=np.float64)
    if tg.shape[0] == 0:
        raise InvalidParametersError("need at least one target")
    ovs = config.overrides
    ov_t0 = np.array([o.t_start for o in ovs], dtype=np.float64)
    ov_t1 = np.array([o.t_end for o in ovs], dtype=np.float64)
    ov_k = np.array([o.kappa for o in ovs], dtype=np.float64)
    status, t_end, y, rt, ry, rk, tr, hits, ev = K.integrate_feedback(
        scenario.initial.as_array(), float(scenario.t0), float(tf), scenario.params.as_array(),
        tg, float(stepper.dt), stepper.method_code, int(stepper.record_stride),
        float(stepper.separation_floor), float(config.a_bar), float(config.far_factor),
        int(config.fallback_code), float(config.sample_period), ov_t0, ov_t1, ov_k,
        float(config.rho_reach), bool(config.stop_on_arrival))
    _raise_status(status, t_end, y)
    transitions = [Transition(float(row[0]), int(row[1]), REASONS[int(row[2])], float(row[3]),
                              float(row[4]), float(row[5]), int(row[6])) for row in tr]
    segments = _segments(transitions, float(t_end))
    n_ig = sum(1 for p, c in zip(transitions, transitions[1:]) if p.kappa == 0 and c.kappa != 0)
    cost = CostBreakdown(n_ig, float(sum(b - a for a, b, _ in segments)))
    per_hits = [(int(i), float(t)) for i, t in hits]
    final = Vec2(*tg[-1])
    t_hit = per_hits[-1][1] if per_hits and per_hits[-1][0] == len(tg) - 1 else None
    events = TrajectoryEvents(
        t_hit=t_hit, min_target_dist=(float(ev[0]), float(ev[1])),
        realized_schedule=[(tr_.t, tr_.kappa) for tr_ in transitions],
        alpha_final=float(K.alpha(y, final.x, final.y)),
        max_separation=float(ev[2]), min_separation=float(ev[3]), max_speed=float(ev[4]))
    traj = Trajectory(rt.copy(), ry.copy(), rk.copy(), events, final)
    return FeedbackRunResult(traj, segments, cost, per_hits, transitions,
                             [Vec2(*t) for t in tg], float(t_end))


def run_feedback(scenario: Scenario, config: FeedbackConfig | None = None,
                 stepper: StepperConfig | None = None) -> FeedbackRunResult:
    """Steer the evader to ``scenario.target`` with the feedback law."""
    return _run(scenario, [scenario.target], config or FeedbackConfig(),
                stepper or StepperConfig(), scenario.tf)


def run_path(scenario: Scenario, targets, config: FeedbackConfig | None = None,
             stepper: StepperConfig | None = None) -> FeedbackRunResult:
    """Visit ``targets`` in order; unreached ones are listed in ``result.unreached``."""
    targets = list(targets)
    if not targets:
        raise InvalidParametersError("target list is empty")
    return _run(scenario, targets, config or FeedbackConfig(), stepper or StepperConfig(),
                scenario.tf)


# audits ---------------------------------------------------------------------

def audit_switch_off(result: FeedbackRunResult, config: FeedbackConfig) -> list[Transition]:
    """Switch-offs by the alignment branch that do not satisfy its conditions."""
    bad = []
    for prev, cur in zip(result.transitions, result.transitions[1:]):
        if prev.kappa != 0 and cur.kappa == 0 and cur.reason == "aligned":
            if not (abs(cur.a) <= config.a_bar and cur.same_side < 0):
                bad.append(cur)
    return bad


def audit_far_field(result: FeedbackRunResult, params: ModelParams,
                    config: FeedbackConfig) -> list[float]:
    """Times of recorded law evaluations where the law fired while the driver was far.

    Only samples that coincide with a law evaluation and lie outside every
    override window are checked, since the control is held in between.
    """
    bad = []
    traj = result.trajectory
    r = traj.separation()
    t0 = float(traj.times[0])
    thresh = config.far_factor * params.delta_2
    for t, ri, k in zip(traj.times, r, traj.kappas):
        if k == 0 or ri**3 <= thresh:
            continue
        if any(o.t_start <= t < o.t_end for o in config.overrides):
            continue
        if config.sample_period > 0:
            q = (t - t0) / config.sample_period
            if abs(q - round(q)) > 1e-6:
                continue
        bad.append(float(t))
    return bad


# target generators ----------------------------------------------------------

def random_targets(seed: int, count: int = 7, radius: float = 8.0,
                   center=(6.0, 0.0)) -> list[Vec2]:
    """Targets uniform in a disc, drawn with numpy's PCG64 generator.

    Each target consumes two doubles ``(u, w)`` from
    ``numpy.random.default_rng(seed).random((count, 2))`` and is placed at
    radius ``radius*sqrt(u)`` and angle ``2*pi*w`` around ``center``.
    """
    u = np.random.default_rng(seed).random((count, 2))
    rr = radius * np.sqrt(u[:, 0])
    th = 2.0 * np.pi * u[:, 1]
    return [Vec2(float(center[0] + a * math.cos(b)), float(center[1] + a * math.sin(b)))
            for a, b in zip(rr, th)]


@dataclass(frozen=True)
class SinePath:
    """``y = y0 + amplitude * sin(2 pi (x - x0) / wavelength)`` for ``x`` in ``[x0, x1]``."""

    x0: float = 8.0
    x1: float = 48.0
    y0: float = 0.0
    amplitude: float = 2.0
    wavelength: float = 20.0

    def y(self, x):
        return self.y0 + self.amplitude * np.sin(2 * np.pi * (np.asarray(x) - self.x0)
                                                 / self.wavelength)

    def waypoints(self, n: int = 80) -> list[Vec2]:
        xs = np.linspace(self.x0, self.x1, n)
        return [Vec2(float(x), float(yv)) for x, yv in zip(xs, self.y(xs))]

    def distance(self, points, resolution: int = 4001) -> np.ndarray:
        """Distance from each point to the curve, via a dense polyline."""
        xs = np.linspace(self.x0, self.x1, resolution)
        a = np.column_stack([xs, self.y(xs)])[:-1]
        seg = np.diff(np.column_stack([xs, self.y(xs)]), axis=0)
        seg2 = (seg**2).sum(axis=1)
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        out = np.empty(len(pts))
        for i, p in enumerate(pts):
            s = np.clip(((p - a) * seg).sum(axis=1) / seg2, 0.0, 1.0)
            out[i] = np.sqrt((((a + s[:, None] * seg) - p) ** 2).sum(axis=1).min())
        return out
