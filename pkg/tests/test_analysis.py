import math

import numpy as np
import pytest

from repulsion_guidance.analysis import (check_lemma1, equilibrium_state, free_agent_mask,
                                         free_agent_potential, measure_circumvention,
                                         potential_derivative, pursuit_asymptotics)
from repulsion_guidance.errors import InsufficientOscillationsError, InvalidParametersError
from repulsion_guidance.integrator import StepperConfig, simulate
from repulsion_guidance.model import ModelParams, SystemState, Vec2, derivatives

P = ModelParams.paper_default()


def test_pursuit_closed_form():
    eq = pursuit_asymptotics(P)
    assert abs(eq.delta_as - math.sqrt(2)) < 1e-12
    assert abs(eq.v_as - 1 / math.sqrt(2)) < 1e-12


def test_pursuit_without_circumvention():
    assert pursuit_asymptotics(P.with_(c_circ=0.0)).delta_as == pytest.approx(math.sqrt(6))


@pytest.mark.parametrize("change", [{"c_repel": 6.0}, {"c_circ": 2.0}])
def test_pursuit_no_equilibrium(change):
    with pytest.raises(InvalidParametersError):
        pursuit_asymptotics(P.with_(**change))


def test_equilibrium_is_stationary():
    for direction in [(1, 0), (0.3, -2), (-1, 1)]:
        s = equilibrium_state(P, direction, evader=(3, 4))
        d = derivatives(s, P, 0)
        assert math.hypot(*(d.dv_d)) < 1e-9 and math.hypot(*(d.dv_e)) < 1e-9


@pytest.mark.parametrize("ud,ue,vd,expected", [
    ((0, 0), (1, 0), (0, 0), 0.0),
    ((0, 0), (math.e, 0), (0, 0), 1.0),
    ((0, 0), (1, 0), (1, 0), 0.4 / 6),
])
def test_potential(ud, ue, vd, expected):
    s = SystemState(0, Vec2(*ud), Vec2(*ue), Vec2(*vd))
    assert free_agent_potential(s, P) == pytest.approx(expected, abs=1e-12)


def test_potential_derivative_examples():
    zero = SystemState(0, Vec2(0, 0), Vec2(1, 0))
    assert potential_derivative(zero, P) == 0
    moving = SystemState(0, Vec2(0, 0), Vec2(1, 0), Vec2(1, 0))
    assert potential_derivative(moving, P) == pytest.approx(-1 / 3)
    eq = equilibrium_state(P)
    # at the pursuit equilibrium the decrease condition no longer holds
    assert potential_derivative(eq, P) == pytest.approx(1 / 3)


@pytest.mark.parametrize("md,nud,me,nue,expected", [(0.4, 1, 1, 2, True), (1, 1, 1, 1, False),
                                                    (1, 10, 1, 1, True)])
def test_lemma1(md, nud, me, nue, expected):
    assert check_lemma1(P.with_(m_d=md, nu_d=nud, m_e=me, nu_e=nue)) is expected


def test_lyapunov_decrease_on_free_agent_segment(paper):
    dt = 1e-3
    tr = simulate(paper.with_(tf=40), 0, StepperConfig(dt=dt, record_stride=1))
    mask = free_agent_mask(tr, P, delta_free=5.0)
    assert mask.sum() > 1000
    idx = np.nonzero(mask)[0]
    vdot = [potential_derivative(tr.state(i), P) for i in idx]
    assert max(vdot) <= 1e-9
    V = np.array([free_agent_potential(tr.state(i), P) for i in idx])
    consecutive = np.diff(idx) == 1
    assert np.all(np.diff(V)[consecutive] <= 10 * dt)


def test_circumvention_measure(circumvention_run):
    m = measure_circumvention(circumvention_run, 48)
    assert m.period_s == pytest.approx(8, abs=0.4)
    assert m.omega_as == pytest.approx(math.pi / 4, rel=0.05)
    assert m.delta_ang == pytest.approx(1.82, abs=0.09)
    assert m.period_s == pytest.approx(2 * math.pi / m.omega_as)


def test_circumvention_mirror(paper, circumvention_run):
    a = measure_circumvention(circumvention_run, 48)
    b = measure_circumvention(simulate(paper.mirrored(), -1), 48)
    # the mirrored driver's y maxima are the original's minima, half a turn later
    assert b.period_s == pytest.approx(a.period_s, abs=1e-3)
    assert b.delta_ang == pytest.approx(a.delta_ang, abs=1e-12)


def test_no_oscillation_in_pursuit(pursuit_run):
    with pytest.raises(InsufficientOscillationsError):
        measure_circumvention(pursuit_run, 48)
