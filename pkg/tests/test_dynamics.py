import math

import numpy as np
import pytest

from bohmsg.dynamics import (
    Outcome,
    StepControl,
    StiffnessError,
    Trajectory,
    classification_threshold,
    classify,
    classify_final,
    integrate,
    integrate_batch,
)
from bohmsg.physics import PhysicalParams, derive_constants, spread_at
from bohmsg.states import ghz4_branches, mermin_branches, singlet_branches

P = PhysicalParams()
DC = derive_constants(P)


def test_free_flight_matches_spreading_solution():
    params = P.replace(a1=0.0)
    k = derive_constants(params).k
    rng = np.random.default_rng(0)
    for state in (singlet_branches(0.7), mermin_branches("xyy"), ghz4_branches("xxyy")):
        z0 = rng.normal(0, 1e-3, state.n_particles)
        traj = integrate(state, z0, params)
        exact = z0[None, :] * np.sqrt(1 + (k * traj.t[:, None]) ** 2)
        assert np.max(np.abs(traj.coords - exact) / np.abs(exact)) < 1e-6


def test_free_flight_long_time():
    # a long flight makes the spreading visible
    params = PhysicalParams(a1=0.0, tau=2.0, magnet_length=2.0e4)
    k = derive_constants(params).k
    traj = integrate(singlet_branches(0.0), [1e-3, -2e-3], params)
    exact = np.array([1e-3, -2e-3]) * math.sqrt(1 + (k * 2.0) ** 2)
    np.testing.assert_allclose(traj.final, exact, rtol=1e-6)


def test_deflection_reaches_basin_centre():
    traj = integrate(singlet_branches(0.0), [1e-3, -1e-3], P)
    target = DC.alpha * P.tau**2
    assert traj.final[0] == pytest.approx(target, rel=0.02)
    assert traj.final[1] == pytest.approx(-target, rel=0.02)
    assert classify(traj) == Outcome((1, -1))


def test_trajectory_shape_and_times():
    traj = integrate(singlet_branches(1.0), [2e-4, 5e-4], P)
    assert len(traj.t) >= 200
    assert traj.t[0] == 0.0 and traj.t[-1] == P.tau
    assert np.all(np.diff(traj.t) > 0)
    assert np.all(np.isfinite(traj.coords))
    np.testing.assert_allclose(np.diff(traj.t), P.tau / (len(traj.t) - 1), rtol=1e-9)
    assert len(traj.samples) == len(traj.t)
    assert traj.samples[0] == (0.0, (2e-4, 5e-4))


def test_tolerance_halving_converges():
    rng = np.random.default_rng(3)
    for state in (singlet_branches(2 * math.pi / 3), mermin_branches("yyx"), ghz4_branches("yxyx")):
        z0 = rng.normal(0, 1e-3, (50, state.n_particles))
        a = integrate_batch(state, z0, P, StepControl())
        b = integrate_batch(state, z0, P, StepControl().halved())
        assert np.max(np.abs(a.final - b.final)) < 1e-6 * P.delta_r0


def test_deterministic_and_batch_independent():
    state = mermin_branches("xxx")
    z0 = np.random.default_rng(5).normal(0, 1e-3, (300, 3))
    full = integrate_batch(state, z0, P)
    again = integrate_batch(state, z0, P)
    assert np.array_equal(full.final, again.final)
    for lo, hi in [(0, 1), (7, 45), (299, 300)]:
        part = integrate_batch(state, z0[lo:hi], P)
        assert np.array_equal(part.final, full.final[lo:hi])
    t1 = integrate(state, z0[3], P)
    t2 = integrate(state, z0[3], P)
    assert np.array_equal(t1.coords, t2.coords) and t1.params_hash == t2.params_hash


def test_params_hash_tracks_inputs():
    a = integrate(singlet_branches(0.0), [1e-4, 2e-4], P)
    b = integrate(singlet_branches(0.0), [1e-4, 2e-4], P.replace(a0=1.0))
    assert a.params_hash != b.params_hash


@pytest.mark.parametrize("state", [singlet_branches(0.0), singlet_branches(2 * math.pi / 3)],
                         ids=lambda s: s.label)
def test_trajectories_keep_their_order(state):
    line = np.linspace(-3e-3, 3e-3, 100)
    for axis in (0, 1):
        z0 = np.full((100, 2), 4e-4)
        z0[:, axis] = line
        res = integrate_batch(state, z0, P, keep_path=True)
        assert np.all(np.diff(res.path[:, :, axis], axis=0) >= 0)


def test_basin_membership_is_settled_early():
    rng = np.random.default_rng(8)
    for state in (singlet_branches(2 * math.pi / 3), mermin_branches("xyy"), ghz4_branches("xxxx")):
        res = integrate_batch(state, rng.normal(0, 1e-3, (300, state.n_particles)), P, keep_path=True)
        width = np.array([spread_at(P, t) for t in res.t])
        final_sign = np.sign(res.final)
        outside = np.abs(res.path) > 3 * width[None, :, None]
        assert np.all(np.sign(res.path)[outside] == np.broadcast_to(final_sign[:, None, :], res.path.shape)[outside])


def test_step_underflow_raises_stiffness_error():
    with pytest.raises(StiffnessError) as info:
        integrate(singlet_branches(0.0), [1e-3, 0.0], P, StepControl(min_step=1e-3))
    assert info.value.t == 0.0
    assert info.value.coords == (1e-3, 0.0)


def test_bad_inputs():
    with pytest.raises(ValueError):
        integrate(singlet_branches(0.0), [1e-3], P)
    with pytest.raises(ValueError):
        integrate(singlet_branches(0.0), [np.nan, 0.0], P)
    with pytest.raises(ValueError):
        integrate(singlet_branches(0.0), [0.0, 0.0], PhysicalParams(tau=0.0, v0=0.0))
    with pytest.raises(ValueError):
        StepControl(rtol=0.0)


def test_classification():
    eps = classification_threshold(P)
    assert eps == pytest.approx(1e-3 * DC.alpha * P.tau**2)
    signs, amb = classify_final(np.array([[0.258, -0.258], [0.0, 0.258], [eps * 1.01, -eps * 1.01]]), P)
    assert signs.tolist() == [[1, -1], [-1, 1], [1, -1]]
    assert amb.tolist() == [False, True, False]


def test_classify_needs_full_trajectory():
    traj = integrate(singlet_branches(0.0), [1e-3, -1e-3], P)
    cut = Trajectory(traj.t[:-1], traj.coords[:-1], P, traj.params_hash)
    with pytest.raises(ValueError):
        classify(cut)


def test_origin_is_ambiguous():
    traj = integrate(singlet_branches(0.0), [0.0, 0.0], P)
    out = classify(traj)
    assert out.ambiguous
