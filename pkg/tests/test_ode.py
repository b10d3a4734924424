"""Propagation engine: step policy, norms, angles, isometry, batching."""

import math

import numpy as np
import pytest

from spectral_forge import ode
from spectral_forge.errors import (EmptyInterval, NonPositiveLambda,
                                   ZeroState)
from spectral_forge.ode import EnergyShift, StateVec


def free(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def test_step_policy_resolves_both_frequencies():
    # low energies: the absolute cap dominates
    assert ode.default_step(1.0, 1.0) == ode.STEP_CAP
    # high energy: solution frequency dominates
    assert ode.default_step(400.0, 1.0) == pytest.approx(
        2 * math.pi / 20.0 / 64)
    # high lambda with low energy: weighting frequency dominates
    assert ode.default_step(1.0, 400.0) == pytest.approx(
        2 * math.pi / 40.0 / 64)


def test_weighted_norm_and_angle():
    s = StateVec(3.0, 4.0)
    assert ode.weighted_norm(s, 1.0) == pytest.approx(5.0)
    assert ode.weighted_norm(s, 4.0) == pytest.approx(math.hypot(3, 2))
    th = ode.prufer_angle(StateVec(1.0, 1.0), 1.0)
    assert th == pytest.approx(math.pi / 4)
    with pytest.raises(NonPositiveLambda):
        ode.weighted_norm(s, 0.0)
    with pytest.raises(ZeroState):
        ode.prufer_angle(StateVec(0.0, 0.0), 1.0)


def test_angle_distance_is_projective():
    assert ode.angle_distance(0.01, math.pi - 0.01) == pytest.approx(0.02)
    assert ode.angle_distance(1.0, 1.0) == 0.0


def test_free_evolution_rotates_exactly():
    # -y'' = y with y = sin(x): after pi/2 the state rotates a quarter turn
    traj = ode.propagate(free, 1.0, 0.0, math.pi / 2, StateVec(0.0, 1.0))
    assert traj.final_state.y == pytest.approx(1.0, abs=1e-9)
    assert traj.final_state.yp == pytest.approx(0.0, abs=1e-9)


def test_free_evolution_weighted_norm_is_invariant():
    traj = ode.propagate(free, 1.0, 0.0, 100.0, StateVec(1.0, 0.0))
    drift = np.max(np.abs(traj.norms - 1.0))
    assert drift <= 1e-8
    assert traj.sup_norm == pytest.approx(1.0, abs=1e-8)


def test_backward_forward_roundtrip():
    q = lambda x: 0.3 * np.cos(x)
    s0 = StateVec(0.7, -0.2)
    fwd = ode.propagate(q, 2.0, 1.0, 40.0, s0)
    back = ode.propagate(q, 2.0, 40.0, 1.0, fwd.final_state)
    assert back.final_state.y == pytest.approx(s0.y, abs=1e-9)
    assert back.final_state.yp == pytest.approx(s0.yp, abs=1e-9)


def test_wronskian_constancy():
    q = lambda x: np.sin(x) / (1.0 + x)
    a = ode.propagate(q, 1.5, 0.0, 30.0, StateVec(1.0, 0.0))
    b = ode.propagate(q, 1.5, 0.0, 30.0, StateVec(0.0, 1.0))
    w0 = ode.wronskian(StateVec(1.0, 0.0), StateVec(0.0, 1.0))
    w1 = ode.wronskian(a.final_state, b.final_state)
    assert w1 == pytest.approx(w0, rel=1e-9)


def test_energy_shift_validation():
    with pytest.raises(NonPositiveLambda):
        EnergyShift(1.0, 0.0)
    with pytest.raises(ValueError):
        EnergyShift(-1.0, 1.0)
    assert EnergyShift(2.0, 3.0).e_eff == 5.0


def test_empty_interval_rejected():
    with pytest.raises(EmptyInterval):
        ode.propagate(free, 1.0, 2.0, 2.0, StateVec(1.0, 0.0))


def test_propagate_batch_matches_single():
    q = lambda x: 0.1 * np.sin(2 * x)
    states = [StateVec(1.0, 0.0), StateVec(0.0, 1.0)]
    finals, factors = ode.propagate_batch(q, 1.0, 0.0, 25.0, states)
    for s0, sf in zip(states, finals):
        ref = ode.propagate(q, 1.0, 0.0, 25.0, s0).final_state
        assert sf.y == pytest.approx(ref.y, abs=1e-12)
        assert sf.yp == pytest.approx(ref.yp, abs=1e-12)
    assert np.all(factors >= 1.0 - 1e-12)


def test_trajectory_csv_roundtrip(tmp_path):
    traj = ode.propagate(free, 1.0, 0.0, 5.0, StateVec(1.0, 0.0))
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape[1] == 4
    assert data[0, 1] == pytest.approx(1.0)
    assert data[-1, 0] == pytest.approx(5.0)
