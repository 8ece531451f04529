"""Open-loop switching strategies: cost functional and shooting optimizers.

The switching time is found by bisection on a three-way decision taken
from one full integration: if the evader never turns back (its velocity
x-component never becomes negative) the control was switched off too
early; if after turning back its velocity ever points below the target
the control was kept on too long; if at the final time it still points
above the target the control was switched off too early.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (BracketError, InvalidParametersError, MaxIterationsError,
                     NoAdmissibleWindowError, ShootingError, TargetUnreachableError)
from .integrator import Schedule, StepperConfig, Trajectory, simulate
from .model import Kappa, Scenario, SystemState

INCREASE = 1
DECREASE = -1
ACCEPT = 0


@dataclass(frozen=True)
class StepControl:
    """Control equal to ``kappa0`` from the initial time until ``tau``, then off."""

    kappa0: int
    tau: float

    def schedule(self, t0: float) -> Schedule:
        if self.tau <= t0:
            return Schedule([(t0, 0)])
        return Schedule([(t0, self.kappa0), (self.tau, 0)])


@dataclass(frozen=True)
class WindowControl:
    """Control equal to ``kappa0`` on ``[t_on, t_off)`` and off elsewhere."""

    kappa0: int
    t_on: float
    t_off: float

    def __post_init__(self):
        if not self.t_on <= self.t_off:
            raise InvalidParametersError(f"need t_on <= t_off, got {self.t_on}, {self.t_off}")

    def schedule(self, t0: float) -> Schedule:
        if self.t_off <= self.t_on or self.t_off <= t0:
            return Schedule([(t0, 0)])
        if self.t_on <= t0:
            return Schedule([(t0, self.kappa0), (self.t_off, 0)])
        return Schedule([(t0, 0), (self.t_on, self.kappa0), (self.t_off, 0)])

    @property
    def cost(self) -> float:
        return self.t_off - self.t_on


@dataclass(frozen=True)
class CostBreakdown:
    n_ig: int
    c_active: float
    sigma1: float = 1.0
    sigma2: float = 1.0

    @property
    def j_total(self) -> float:
        return self.sigma1 * self.n_ig + self.sigma2 * self.c_active

    def to_dict(self) -> dict:
        return {"n_ig": self.n_ig, "c_active": self.c_active, "sigma1": self.sigma1,
                "sigma2": self.sigma2, "j_total": self.j_total}


@dataclass(frozen=True)
class ShootConfig:
    epsilon_align: float = 1e-6
    bracket: tuple[float, float] | None = None
    max_iters: int = 80
    rho: float | None = None
    stepper: StepperConfig = field(default_factory=StepperConfig)
    sigma1: float = 1.0
    sigma2: float = 1.0

    def __post_init__(self):
        if not self.epsilon_align > 0:
            raise InvalidParametersError("epsilon_align must be positive")
        if self.max_iters < 1:
            raise InvalidParametersError("max_iters must be positive")
        if self.bracket is not None and not self.bracket[0] < self.bracket[1]:
            raise InvalidParametersError(f"bracket must be increasing, got {self.bracket}")


def cost_active(schedule: Schedule, t0: float, tf: float) -> float:
    """Total time with a nonzero control inside ``[t0, tf]``."""
    return float(sum(b - a for a, b, _ in schedule.segments(t0, tf)))


def ignition_count(schedule: Schedule) -> int:
    """Number of switches from 0 to a nonzero value.

    A control that is already active at the initial time has not been
    ignited, and a direct sign flip is not an ignition.
    """
    tr = schedule.transitions()
    return sum(1 for (_, a), (_, b) in zip(tr, tr[1:]) if a == 0 and b != 0)


def cost_breakdown(schedule: Schedule, t0: float, tf: float,
                   sigma1: float = 1.0, sigma2: float = 1.0) -> CostBreakdown:
    return CostBreakdown(ignition_count(schedule), cost_active(schedule, t0, tf), sigma1, sigma2)


def alignment_alpha(state: SystemState, target) -> float:
    """Signed alignment of the evader velocity with the direction to the target.

    Zero when the velocity points straight at (or away from) the target,
    positive when it points above it for motion in the negative x direction.
    """
    return ((target[1] - state.u_e.y) * state.v_e.x
            - (target[0] - state.u_e.x) * state.v_e.y)


def default_kappa0(scenario: Scenario) -> int:
    """Circumvention direction that turns the evader toward the target."""
    from .feedback import alignment_a

    a = alignment_a(scenario.initial, scenario.target)
    return 1 if a >= 0 else -1


@dataclass
class ShotOutcome:
    """One evaluation of the decision test."""

    switch_time: float
    decision: int
    trajectory: Trajectory
    miss: float
    alpha_residual: float
    reached: bool


def _evaluate(scenario: Scenario, schedule: Schedule, switch_time: float,
              config: ShootConfig, rho: float) -> ShotOutcome:
    traj = simulate(scenario, schedule, config.stepper)
    ev = traj.events
    v_end = math.hypot(traj.states[-1, 6], traj.states[-1, 7])
    if ev.t_b is None:
        decision = INCREASE
    elif ev.t_alpha_negative is not None:
        decision = DECREASE
    elif ev.alpha_final > 0:
        decision = INCREASE
    else:
        decision = ACCEPT
    d_ca, t_ca = ev.min_dist_after_tb
    t_end = traj.times[-1]
    if ev.t_b is not None and t_ca < t_end - 1e-12:
        miss, residual = d_ca, ev.alpha_at_closest
    else:
        # still approaching at the horizon: project the current heading
        miss = abs(ev.alpha_final) / v_end if v_end > 0 else math.inf
        residual = ev.alpha_final
    if residual is None:
        residual = math.inf
    reached = ev.t_b is not None and d_ca < rho
    return ShotOutcome(switch_time, decision, traj, miss, residual, reached)


@dataclass
class ShootResult:
    switch_time: float
    trajectory: Trajectory
    cost: CostBreakdown
    control: StepControl | WindowControl
    iterations: int
    complete: bool
    reached: bool
    miss: float
    alpha_residual: float
    bracket: tuple[float, float]

    def to_dict(self) -> dict:
        return {"switch_time": self.switch_time, "cost": self.cost.to_dict(),
                "iterations": self.iterations, "complete": self.complete,
                "reached": self.reached, "miss": self.miss,
                "alpha_residual": self.alpha_residual, "bracket": list(self.bracket)}


def _bisect(scenario: Scenario, make_schedule, lower: float, upper: float,
            bracket: tuple[float, float], config: ShootConfig, rho: float):
    """Bisection on the switching time in ``[lower, upper]``.

    Returns ``(outcome, iterations, bracket, complete)``; ``complete`` is
    False when the control must stay on until ``upper``.
    """
    lo, hi = max(bracket[0], lower), min(bracket[1], upper)
    iters = 0

    def shot(x):
        nonlocal iters
        iters += 1
        return _evaluate(scenario, make_schedule(x), x, config, rho)

    def accepted(o: ShotOutcome) -> bool:
        return o.miss < rho and abs(o.alpha_residual) < config.epsilon_align

    o_lo, o_hi = shot(lo), shot(hi)
    # one-sided brackets grow by 1.5x toward the failing side
    while o_lo.decision != INCREASE:
        if accepted(o_lo):
            return o_lo, iters, (lo, hi), True
        if lo <= lower:
            raise BracketError(f"control already too long at the lower limit {lower}")
        width = hi - lo
        hi, o_hi = lo, o_lo
        lo = max(lower, hi - 1.5 * width)
        o_lo = shot(lo)
    while o_hi.decision == INCREASE:
        if hi >= upper:
            return o_hi, iters, (lo, hi), False
        width = hi - lo
        lo, o_lo = hi, o_hi
        hi = min(upper, lo + 1.5 * width)
        o_hi = shot(hi)
    if accepted(o_hi):
        return o_hi, iters, (lo, hi), True

    # phase 1: the three-way decision test
    width_tol = 1e-7 * max(1.0, abs(hi))
    while hi - lo > width_tol:
        if iters >= config.max_iters:
            raise MaxIterationsError(
                f"no switching time within tolerance after {iters} integrations; "
                f"bracket [{lo!r}, {hi!r}]")
        mid = 0.5 * (lo + hi)
        o = shot(mid)
        if accepted(o):
            return o, iters, (lo, hi), True
        if o.decision == INCREASE:
            lo, o_lo = mid, o
        else:
            hi, o_hi = mid, o

    # phase 2: the decision boundary is where the heading first grazes the
    # target; the hit itself is the zero of the signed alignment at closest
    # approach, which lies just beside it
    a, b = lo, hi
    ga, gb = o_lo.alpha_residual, o_hi.alpha_residual
    step = max(hi - lo, width_tol)
    while not (ga > 0 > gb):
        if iters >= config.max_iters:
            raise MaxIterationsError(f"could not bracket the target hit near [{lo!r}, {hi!r}]")
        if not ga > 0:
            a = max(lower, a - step)
            o_lo = shot(a)
            ga = o_lo.alpha_residual
        if not gb < 0:
            b = min(upper, b + step)
            o_hi = shot(b)
            gb = o_hi.alpha_residual
        step *= 1.5
    best = o_lo if abs(ga) < abs(gb) else o_hi
    if accepted(best):
        return best, iters, (a, b), True
    while iters < config.max_iters:
        mid = 0.5 * (a + b)
        if not a < mid < b:
            break
        o = shot(mid)
        if abs(o.alpha_residual) < abs(best.alpha_residual):
            best = o
        if accepted(o):
            return o, iters, (a, b), True
        if o.alpha_residual > 0:
            a = mid
        else:
            b = mid
    if iters >= config.max_iters:
        raise MaxIterationsError(
            f"no switching time within tolerance after {iters} integrations; "
            f"bracket [{a!r}, {b!r}], best miss {best.miss:.3e}")
    raise ShootingError(
        f"bracket collapsed to [{a!r}, {b!r}] without meeting the tolerance; "
        f"best miss {best.miss:.3e}, alpha {best.alpha_residual:.3e}")


def _mirror_trajectory(traj: Trajectory) -> Trajectory:
    flip = np.array([1.0, -1.0] * 4)
    ev = replace(traj.events,
                 realized_schedule=[(t, -k) for t, k in traj.events.realized_schedule],
                 alpha_at_closest=None if traj.events.alpha_at_closest is None
                 else -traj.events.alpha_at_closest,
                 alpha_final=-traj.events.alpha_final)
    target = None if traj.target is None else traj.target.mirrored()
    return Trajectory(traj.times, traj.states * flip, -traj.kappas, ev, target)


def _mirror_result(res: ShootResult) -> ShootResult:
    c = res.control
    ctrl = replace(c, kappa0=-c.kappa0)
    return replace(res, trajectory=_mirror_trajectory(res.trajectory), control=ctrl,
                   alpha_residual=-res.alpha_residual)


def shoot_step_control(scenario: Scenario, kappa0: int | None = None,
                       config: ShootConfig | None = None) -> ShootResult:
    """Optimal switch-off time for a control that is active from the start."""
    config = config or ShootConfig()
    rho = scenario.rho if config.rho is None else config.rho
    k0 = default_kappa0(scenario) if kappa0 is None else int(Kappa.coerce(kappa0))
    if k0 == 0:
        raise InvalidParametersError("kappa0 must be +1 or -1")
    if k0 < 0:
        # the decision test is written for counterclockwise turns
        return _mirror_result(shoot_step_control(scenario.mirrored(), 1, config))
    t0, tf = scenario.t0, scenario.tf
    bracket = config.bracket or (t0, tf)
    outcome, iters, br, complete = _bisect(
        scenario, lambda x: StepControl(k0, x).schedule(t0), t0, tf, bracket, config, rho)
    if not complete:
        raise TargetUnreachableError(
            f"the evader cannot be turned toward the target before tf={tf}")
    tau = outcome.switch_time
    sched = StepControl(k0, tau).schedule(t0)
    return ShootResult(tau, outcome.trajectory,
                       cost_breakdown(sched, t0, tf, config.sigma1, config.sigma2),
                       StepControl(k0, tau), iters, True, outcome.reached, outcome.miss,
                       outcome.alpha_residual, br)


def shoot_window_off(scenario: Scenario, t_on: float, kappa0: int | None = None,
                     config: ShootConfig | None = None) -> ShootResult:
    """Switch-off time that steers the evader onto the target for a given ignition time.

    When the turn cannot be completed before ``tf`` the result carries
    ``t_off = tf`` and ``complete = False``.
    """
    config = config or ShootConfig()
    rho = scenario.rho if config.rho is None else config.rho
    k0 = default_kappa0(scenario) if kappa0 is None else int(Kappa.coerce(kappa0))
    if k0 == 0:
        raise InvalidParametersError("kappa0 must be +1 or -1")
    if k0 < 0:
        return _mirror_result(shoot_window_off(scenario.mirrored(), t_on, 1, config))
    t0, tf = scenario.t0, scenario.tf
    if not t0 <= t_on < tf:
        raise InvalidParametersError(f"t_on must lie in [{t0}, {tf}), got {t_on}")
    bracket = config.bracket or (t_on, tf)

    def make(x):
        return WindowControl(k0, t_on, x).schedule(t0)

    outcome, iters, br, complete = _bisect(scenario, make, t_on, tf, bracket, config, rho)
    t_off = outcome.switch_time if complete else tf
    ctrl = WindowControl(k0, t_on, t_off)
    return ShootResult(t_off, outcome.trajectory,
                       cost_breakdown(ctrl.schedule(t0), t0, tf, config.sigma1, config.sigma2),
                       ctrl, iters, complete, outcome.reached, outcome.miss,
                       outcome.alpha_residual, br)


@dataclass
class CostPoint:
    t_on: float
    cost: float
    complete: bool
    t_off: float = math.nan
    reached: bool = False
    iterations: int = 0
    error: str | None = None


@dataclass
class CostCurve:
    points: list[CostPoint]

    def arrays(self, complete_only: bool = True):
        pts = [p for p in self.points if p.error is None and (p.complete or not complete_only)]
        return (np.array([p.t_on for p in pts]), np.array([p.cost for p in pts]))

    def knee(self) -> float:
        """Ignition time where the linear descent ends: the first local minimum."""
        t, c = self.arrays()
        if len(t) < 3:
            raise NoAdmissibleWindowError("need at least three complete points")
        for i in range(1, len(c) - 1):
            if c[i] <= c[i - 1] and c[i] < c[i + 1]:
                return float(t[i])
        return float(t[int(np.argmin(c))])

    def plateau(self) -> tuple[float, float]:
        """``(start, value)``: the knee and the median cost past it."""
        start = self.knee()
        t, c = self.arrays()
        return start, float(np.median(c[t >= start]))

    def cheapest(self) -> CostPoint:
        pts = [p for p in self.points if p.error is None and p.complete]
        if not pts:
            raise NoAdmissibleWindowError("every grid point is incomplete")
        return min(pts, key=lambda p: (p.cost, p.t_on))

    def best(self, tolerance: float = 0.01) -> CostPoint:
        """Earliest complete window whose cost is within ``tolerance`` of the cheapest.

        Along the plateau a later ignition saves less than the plateau's own
        ripple while delaying arrival, so the start of the plateau wins.
        """
        floor = self.cheapest().cost
        pts = [p for p in self.points
               if p.error is None and p.complete and p.cost <= floor + tolerance]
        return min(pts, key=lambda p: p.t_on)


def _cost_point(scenario, t_on, kappa0, config) -> CostPoint:
    try:
        res = shoot_window_off(scenario, t_on, kappa0, config)
    except ShootingError as exc:
        return CostPoint(t_on, math.nan, False, error=str(exc))
    return CostPoint(t_on, res.switch_time - t_on, res.complete, res.switch_time,
                     res.reached, res.iterations)


def cost_curve(scenario: Scenario, t_on_grid, config: ShootConfig | None = None,
               kappa0: int | None = None, workers: int = 1) -> CostCurve:
    """Active-time cost of the optimal window for each ignition time on a grid."""
    config = config or ShootConfig()
    k0 = default_kappa0(scenario) if kappa0 is None else kappa0
    grid = [float(x) for x in t_on_grid]
    for x in grid:
        if not scenario.t0 <= x < scenario.tf:
            raise InvalidParametersError(f"grid point {x} outside [t0, tf)")
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            pts = list(pool.map(lambda x: _cost_point(scenario, x, k0, config), grid))
    else:
        pts = [_cost_point(scenario, x, k0, config) for x in grid]
    return CostCurve(pts)


@dataclass
class WindowOptimum:
    control: WindowControl
    cost: CostBreakdown
    curve: CostCurve
    refined: CostCurve


def optimize_window(scenario: Scenario, config: ShootConfig | None = None,
                    kappa0: int | None = None, grid_step: float = 0.25,
                    refine_halfwidth: float = 1.0, refine_step: float = 0.01,
                    t_on_range: tuple[float, float] | None = None,
                    workers: int = 1, tolerance: float = 0.01) -> WindowOptimum:
    """Coarse scan of ignition times followed by a fine scan around the best one."""
    config = config or ShootConfig()
    k0 = default_kappa0(scenario) if kappa0 is None else kappa0
    lo, hi = t_on_range or (scenario.t0, scenario.tf - grid_step)
    coarse = cost_curve(scenario, np.arange(lo, hi + 1e-9, grid_step), config, k0, workers)
    centre = coarse.best(tolerance).t_on
    a = max(lo, centre - refine_halfwidth)
    b = min(scenario.tf - refine_step, centre + refine_halfwidth)
    fine = cost_curve(scenario, np.arange(a, b + 1e-9, refine_step), config, k0, workers)
    best = fine.cheapest()
    ctrl = WindowControl(k0, best.t_on, best.t_off)
    cost = cost_breakdown(ctrl.schedule(scenario.t0), scenario.t0, scenario.tf,
                          config.sigma1, config.sigma2)
    return WindowOptimum(ctrl, cost, coarse, fine)


def deviation_angle(scenario: Scenario, tau: float, kappa0: int = 1,
                    config: StepperConfig | None = None) -> float:
    """Final heading of the evader, measured in the turning direction from +x.

    Returned in ``[0, 2*pi)``, so it grows monotonically as the turn
    deepens past half a revolution.
    """
    traj = simulate(scenario, StepControl(kappa0, tau).schedule(scenario.t0), config)
    vx, vy = traj.states[-1, 6], traj.states[-1, 7]
    return math.atan2(kappa0 * vy, vx) % (2 * math.pi)


def with_rho(scenario: Scenario, rho: float) -> Scenario:
    return replace(scenario, rho=rho)
