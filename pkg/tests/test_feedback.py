import math

import numpy as np
import pytest

from repulsion_guidance.errors import InvalidParametersError
from repulsion_guidance.feedback import (FeedbackConfig, FeedbackLaw, OverrideWindow, SinePath,
                                         alignment_a, audit_far_field, audit_switch_off,
                                         chi_far, feedback_kappa, random_targets, run_feedback,
                                         run_path, same_side)
from repulsion_guidance.integrator import StepperConfig, simulate
from repulsion_guidance.model import Kappa, ModelParams, Scenario, SystemState, Vec2

P = ModelParams.paper_default()


def st(ud, ue):
    return SystemState(0, Vec2(*ud), Vec2(*ue))


@pytest.fixture(scope="module")
def case_a():
    return run_feedback(Scenario.paper(tf=63), FeedbackConfig(a_bar=0.4))


def test_alignment_a():
    assert alignment_a(st((-6, 0), (6, 0)), (1, 1)) == 12
    assert alignment_a(st((0, 0), (1, 1)), (3, 3)) == 0
    assert alignment_a(st((-6, 0), (6, 0)), (1, -1)) == -12


def test_same_side():
    assert same_side(st((0, 0), (1, 0)), (2, 0)) == -1
    assert same_side(st((0, 0), (1, 0)), (-1, 0)) == 2
    assert same_side(st((0, 0), (1, 0)), (1, 0)) == 0


def test_chi_far():
    assert chi_far(st((-6, 0), (6, 0)), P) == 0
    assert chi_far(st((0, 0), (1.4, 0)), P) == 1
    r = 3.0 ** (1 / 3)
    # exactly on the threshold counts as near
    s = st((0, 0), (r, 0))
    assert chi_far(s, P, far_factor=r**3 / 2) == 1


def test_law_branches():
    cfg = FeedbackConfig(a_bar=0.4)
    assert feedback_kappa(st((-6, 0), (6, 0)), (1, 1), P, cfg) == Kappa.OFF
    near = st((0, 0), (1, 0))
    # a = 0.5 with the target ahead of the evader
    assert feedback_kappa(near, (3, 0.5), P, cfg) == Kappa.CCW
    # |a| <= a_bar but the target lies behind the driver
    assert feedback_kappa(near, (-3, 0.1), P, cfg) == Kappa.CCW
    assert feedback_kappa(near, (3, 0.1), P, cfg) == Kappa.OFF
    # boundary |a| = a_bar switches off
    assert feedback_kappa(near, (3, 0.4), P, cfg) == Kappa.OFF


def test_sign_fallback():
    near = st((0, 0), (1, 0))
    behind = (-3, 0.0)
    assert feedback_kappa(near, behind, P, FeedbackConfig(), prev_kappa=-1) == Kappa.CW
    assert feedback_kappa(near, behind, P, FeedbackConfig(), prev_kappa=0) == Kappa.CCW
    assert feedback_kappa(near, behind, P, FeedbackConfig(sign_fallback=-1), 1) == Kappa.CW


def test_config_validation():
    for bad in ({"a_bar": 0}, {"far_factor": 0.5}, {"sign_fallback": 0}, {"rho_reach": 0}):
        with pytest.raises(InvalidParametersError):
            FeedbackConfig(**bad)
    with pytest.raises(InvalidParametersError):
        OverrideWindow(3, 2, 1)


def test_case_a_segments(case_a):
    expected = [(39.17, 39.55), (41.54, 41.89), (43.77, 44.11), (45.98, 46.32)]
    for (a, b, k), (ea, eb) in zip(case_a.segments, expected):
        assert k == 1 and abs(a - ea) <= 0.3 and abs(b - eb) <= 0.3


def test_segment_accounting(case_a):
    segs = case_a.segments
    assert all(a < b for a, b, _ in segs)
    assert all(s[1] <= n[0] for s, n in zip(segs, segs[1:]))
    assert case_a.cost.c_active == pytest.approx(sum(b - a for a, b, _ in segs))
    tr = simulate(Scenario.paper(tf=63), case_a.schedule, StepperConfig(record_stride=1))
    t = tr.times
    integral = float(np.sum(np.abs(tr.kappas[:-1]) * np.diff(t)))
    dt = 1e-3
    assert abs(integral - case_a.cost.c_active) <= dt * 2 * len(segs) + 1e-9


def test_audits(case_a):
    cfg = FeedbackConfig()
    assert audit_switch_off(case_a, cfg) == []
    assert audit_far_field(case_a, P, cfg) == []


def test_compiled_matches_python_rule():
    sc = Scenario.paper(tf=45)
    cfg = FeedbackConfig(sample_period=0.0, stop_on_arrival=False)
    law = FeedbackLaw(sc.target, P, cfg)
    fast = simulate(sc, law)
    slow = simulate(sc, lambda s, k: law(s, k))
    assert np.abs(fast.states[-1] - slow.states[-1]).max() < 1e-9
    assert fast.events.realized_schedule == slow.events.realized_schedule


def test_mirror_symmetry(case_a):
    m = run_feedback(Scenario.paper(tf=63).mirrored(), FeedbackConfig().mirrored())
    flip = np.array([1, -1] * 4)
    assert np.array_equal(m.trajectory.states, case_a.trajectory.states * flip)
    assert m.cost.n_ig == case_a.cost.n_ig
    assert m.cost.c_active == case_a.cost.c_active


@pytest.mark.parametrize("a_bar", [0.2, 0.4, 0.8])
def test_reaches_target_for_several_tolerances(a_bar):
    res = run_feedback(Scenario.paper(tf=100), FeedbackConfig(a_bar=a_bar))
    assert res.arrived, f"min distance {res.trajectory.events.min_target_dist}"


def test_override_then_law_resumes():
    cfg = FeedbackConfig(a_bar=0.1, overrides=[OverrideWindow(39.17, 39.6, 1)])
    res = run_feedback(Scenario.paper(tf=70), cfg)
    first = res.segments[0]
    assert first[0] == pytest.approx(39.17, abs=0.01) and first[1] == pytest.approx(39.6, abs=1e-9)
    assert any(tr.reason == "override" for tr in res.transitions)


def test_single_target_path_equals_run(case_a):
    res = run_path(Scenario.paper(tf=63), [Vec2(1, 1)], FeedbackConfig())
    assert np.array_equal(res.trajectory.states, case_a.trajectory.states)
    assert res.segments == case_a.segments


def test_random_targets_reproducible():
    a = random_targets(3)
    assert a == random_targets(3) and a != random_targets(4)
    assert all(math.hypot(t.x - 6, t.y) < 8 for t in a) and len(a) == 7


def test_unreached_targets_listed():
    res = run_path(Scenario.paper(tf=30), [Vec2(1, 1), Vec2(-5, 3)], FeedbackConfig())
    assert res.unreached == [0, 1] and not res.arrived


def test_sine_path_distance():
    path = SinePath()
    pts = path.waypoints(50)
    assert np.allclose(path.distance(pts), 0, atol=1e-3)
    assert path.distance([(path.x0, path.y0 + 1.0)])[0] == pytest.approx(1.0, abs=0.2)
