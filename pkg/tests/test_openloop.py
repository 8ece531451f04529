import math

import numpy as np
import pytest

from repulsion_guidance.errors import InvalidParametersError, NoAdmissibleWindowError
from repulsion_guidance.integrator import Schedule, simulate
from repulsion_guidance.model import Scenario, SystemState, Vec2
from repulsion_guidance.openloop import (CostCurve, CostPoint, ShootConfig, StepControl,
                                         WindowControl, alignment_alpha, cost_active,
                                         cost_breakdown, default_kappa0, ignition_count,
                                         shoot_step_control, shoot_window_off)


@pytest.fixture(scope="module")
def step_result():
    return shoot_step_control(Scenario.paper(), 1)


@pytest.fixture(scope="module")
def fine():
    return Scenario.paper(tf=60, rho=1e-8)


def test_cost_active_examples():
    assert cost_active(Schedule.constant(0), 0, 100) == 0
    w = WindowControl(1, 42, 45.5337)
    assert cost_active(w.schedule(0), 0, 100) == pytest.approx(3.5337)
    two = Schedule([(0, 0), (1, 1), (1.38, 0), (5, -1), (5.35, 0)])
    assert cost_active(two, 0, 100) == pytest.approx(0.73)


def test_ignitions():
    assert ignition_count(StepControl(1, 41).schedule(0)) == 0
    assert ignition_count(WindowControl(1, 40, 43).schedule(0)) == 1
    assert ignition_count(Schedule([(0, 0), (1, 1), (2, -1), (3, 0), (4, 1)])) == 2


def test_window_degenerate_cases():
    assert WindowControl(1, 0, 5).schedule(0) == StepControl(1, 5).schedule(0)
    assert WindowControl(1, 3, 3).schedule(0) == Schedule.constant(0)
    with pytest.raises(InvalidParametersError):
        WindowControl(1, 5, 3)


def test_weights():
    b = cost_breakdown(WindowControl(1, 40, 43.5).schedule(0), 0, 60, sigma1=0, sigma2=1)
    assert b.j_total == pytest.approx(3.5)


def test_alignment_alpha():
    s = SystemState(0, Vec2(0, 0), Vec2(6, 0), v_e=Vec2(-1, 0))
    assert alignment_alpha(s, (1, 1)) == -1
    toward = SystemState(0, Vec2(0, 0), Vec2(6, 0), v_e=Vec2(-5, 1))
    assert alignment_alpha(toward, (1, 1)) == 0
    scaled = SystemState(0, Vec2(0, 0), Vec2(6, 0), v_e=Vec2(-3, 0))
    assert alignment_alpha(scaled, (1, 1)) == -3


def test_default_kappa0():
    assert default_kappa0(Scenario.paper()) == 1
    assert default_kappa0(Scenario.paper().mirrored()) == -1


def test_tau_star(step_result):
    assert step_result.switch_time == pytest.approx(41.15, abs=0.5)
    assert step_result.cost.c_active == pytest.approx(step_result.switch_time)
    assert step_result.cost.n_ig == 0
    assert step_result.trajectory.events.t_hit is not None
    assert step_result.miss < 1e-4


def test_tau_star_mirror(step_result):
    m = shoot_step_control(Scenario.paper().mirrored(), -1)
    assert m.switch_time == pytest.approx(step_result.switch_time, abs=1e-3)
    assert m.control.kappa0 == -1
    flip = np.array([1, -1] * 4)
    assert np.allclose(m.trajectory.states, step_result.trajectory.states * flip)


def test_window_mirror(fine):
    a = shoot_window_off(fine, 42.0, 1)
    b = shoot_window_off(fine.mirrored(), 42.0)
    assert b.control.kappa0 == -1 and b.switch_time == a.switch_time


def test_decision_test_bracket(paper, step_result):
    tau = step_result.switch_time
    early = simulate(paper, StepControl(1, tau - 1.5).schedule(0))
    assert early.events.t_b is None or early.events.alpha_final > 0
    late = simulate(paper, StepControl(1, tau + 1.5).schedule(0))
    assert late.events.t_alpha_negative is not None


@pytest.mark.parametrize("t_on,expected", [(42.0, 45.5337), (50.0, 53.5221)])
def test_window_off(fine, t_on, expected):
    res = shoot_window_off(fine, t_on, 1)
    assert res.switch_time == pytest.approx(expected, abs=0.05)
    assert res.complete and res.cost.n_ig == 1


def test_window_at_t0_matches_step(step_result):
    res = shoot_window_off(Scenario.paper(), 0.0, 1)
    assert res.switch_time == pytest.approx(step_result.switch_time, abs=1e-3)


def test_window_never_worse_than_step(fine, step_result):
    res = shoot_window_off(fine, 38.9, 1)
    assert res.cost.c_active == pytest.approx(3.5228, abs=0.05)
    assert res.cost.c_active < step_result.cost.c_active


def test_incomplete_when_too_late():
    sc = Scenario.paper(tf=50, rho=1e-8)
    res = shoot_window_off(sc, 49.0, 1)
    assert not res.complete and res.switch_time == 50


def test_linear_descent_off_plateau(fine):
    h = 0.25
    knee = 38.92
    slopes = {}
    for t_on in np.arange(0.0, knee - 2 - h + 1e-9, 3.0).tolist() + [knee - 2 - h]:
        a = shoot_window_off(fine, t_on, 1).cost.c_active
        b = shoot_window_off(fine, t_on + h, 1).cost.c_active
        slopes[round(t_on, 2)] = (a - b) / h
    off = {t: d for t, d in slopes.items() if abs(d - 1) > 0.02}
    assert not off, f"descent deviates from unit slope at {off}"


def test_plateau_overlap_after_shift(fine):
    a = shoot_window_off(fine, 42.0, 1).trajectory
    b = shoot_window_off(fine, 50.0, 1).trajectory
    shift = 8.0
    ta = np.arange(42.0, 52.0, 0.1)
    xa = np.column_stack([np.interp(ta, a.times, a.states[:, k]) for k in (2, 3)])
    xb = np.column_stack([np.interp(ta + shift, b.times, b.states[:, k]) for k in (2, 3)])
    # compare the turns relative to the evader's position at ignition
    xa -= xa[0]
    xb -= xb[0]
    assert np.abs(xa - xb).max() < 0.05


def test_cost_curve_helpers():
    pts = [CostPoint(t, c, True, reached=True) for t, c in
           [(30, 5.0), (31, 4.0), (32, 3.6), (33, 3.5), (34, 3.52), (35, 3.49), (36, 3.51)]]
    cc = CostCurve(pts + [CostPoint(37, 9.0, False)])
    assert cc.knee() == 33
    assert cc.plateau() == (33, pytest.approx(3.505))
    assert cc.cheapest().t_on == 35
    assert cc.best(0.02).t_on == 33
    with pytest.raises(NoAdmissibleWindowError):
        CostCurve([CostPoint(1, 1.0, False)]).best()


def test_bad_t_on(fine):
    with pytest.raises(InvalidParametersError):
        shoot_window_off(fine, 61.0, 1)


def test_shoot_config_validation():
    with pytest.raises(InvalidParametersError):
        ShootConfig(bracket=(5, 1))
    with pytest.raises(InvalidParametersError):
        ShootConfig(epsilon_align=0)
