import math

import numpy as np
import pytest

from bohmsg import experiments as ex
from bohmsg.physics import PhysicalParams
from bohmsg.states import MeasurementConfig, born_distribution, mermin_branches, singlet_branches

P = PhysicalParams()
ROOT3 = math.sqrt(3) / 2
LEFT = (1e-3 * ROOT3, 1e-3 * 0.5)
FIRST = ex.InitialSample((LEFT, (1.1e-3 * ROOT3, 1.1e-3 * 0.5)))
MIRRORED = ex.InitialSample((LEFT, (-1e-3 * ROOT3, -1e-3 * 0.5)))


def two_config(name):
    return MeasurementConfig(ex.TWO_PARTICLE_SETTINGS[name], ex.TWO_PARTICLE_FRAMES)


def test_sampling_is_reproducible_and_sliceable():
    a = ex.sample_initials(50, 1e-3, 3, seed=9)
    b = ex.sample_initials(50, 1e-3, 3, seed=9)
    assert a == b
    assert a[0].lineage == (9, 0) and a[49].lineage == (9, 49)
    full = ex.sample_array(50, 1e-3, 3, 9)
    assert np.array_equal(ex.sample_array(10, 1e-3, 3, 9, start=40), full[40:])
    assert not np.array_equal(ex.sample_array(5, 1e-3, 3, (9, 1)), full[:5])
    with pytest.raises(ValueError):
        ex.sample_array(0, 1e-3, 2, 1)


def test_sampling_moments():
    n = 10_000
    x = ex.sample_array(n, 1e-3, 2, 123).reshape(n, -1)
    assert np.all(np.abs(x.mean(axis=0)) < 4 * 1e-3 / math.sqrt(n))
    assert np.all(np.abs(x.std(axis=0) / 1e-3 - 1) < 0.05)


def test_run_joint_reference_positions():
    state_for = lambda name: singlet_branches(
        two_config(name).lab_angles()[1] - two_config(name).lab_angles()[0])
    assert ex.run_joint(state_for("Z'L,ZR"), FIRST, two_config("Z'L,ZR"), P).signs == (-1, 1)
    assert ex.run_joint(state_for("ZL,Z'R"), FIRST, two_config("ZL,Z'R"), P).signs == (1, 1)
    assert ex.run_joint(state_for("ZL,ZR"), MIRRORED, two_config("ZL,ZR"), P).signs == (1, -1)


def test_run_joint_failure_is_ambiguous():
    config = MeasurementConfig((0.0, 0.0))
    assert not ex.run_joint(singlet_branches(0.0), FIRST, config, P).ambiguous
    out = ex.run_joint(singlet_branches(0.0), FIRST, config, P, step_ctrl=ex.StepControl(min_step=1e-3))
    assert out.ambiguous and "underflow" in out.diagnostic


def test_run_joint_particle_mismatch():
    with pytest.raises(ValueError):
        ex.run_joint(mermin_branches("xyy"), FIRST, MeasurementConfig((0.0, 0.0)), P)


def test_two_particle_contradiction_reference_positions():
    rep = ex.two_particle_contradiction(FIRST, P)
    assert [rep.joint_outcomes[s].signs for s in ("ZL,ZR", "Z'L,Z'R", "Z'L,ZR", "ZL,Z'R")] == [
        (1, 1), (1, 1), (-1, 1), (1, 1)]
    assert (rep.product_a, rep.product_b, rep.contradiction, rep.indeterminate) == (1, -1, True, False)
    rep = ex.two_particle_contradiction(MIRRORED, P)
    assert all(o.signs == (1, -1) for o in rep.joint_outcomes.values())
    assert not rep.contradiction


def test_other_rotation_sense_breaks_the_reference_outcomes():
    rep = ex.two_particle_contradiction(FIRST, P, sense=-1)
    got = [rep.joint_outcomes[s].signs for s in ("ZL,ZR", "Z'L,Z'R", "Z'L,ZR", "ZL,Z'R")]
    assert got != [(1, 1), (1, 1), (-1, 1), (1, 1)]


def test_origin_is_indeterminate():
    origin2 = ex.InitialSample(((0.0, 0.0), (0.0, 0.0)))
    assert ex.two_particle_contradiction(origin2, P).indeterminate
    assert ex.mermin_check(ex.InitialSample(((0.0, 0.0),) * 3), P).indeterminate
    assert ex.ghz4_check(ex.InitialSample(((0.0, 0.0),) * 4), P).indeterminate


def test_correlation_estimates():
    e0 = ex.estimate_correlation(0.0, 500, 1, P)
    assert e0.value == -1.0 and e0.n_ambiguous <= 2 and e0.warning == ""
    e90 = ex.estimate_correlation(math.pi / 2, 2000, 2, P)
    assert abs(e90.value) < 3 * e90.stderr
    e120 = ex.estimate_correlation(2 * math.pi / 3, 2000, 3, P)
    assert abs(e120.value - 0.5) < 3 * e120.stderr
    assert -1 <= e120.value <= 1
    with pytest.raises(ValueError):
        ex.estimate_correlation(0.0, 50, 1, P)


def test_ambiguity_warning():
    est = ex._mean_estimate(np.ones(90), 100, 10)
    assert "10 of 100" in est.warning


def test_chsh_parallel_axes():
    res = ex.chsh(ex.parallel_chsh_configs(), 300, 4, P)
    assert res.value == pytest.approx(-2.0, abs=1e-12)
    with pytest.raises(ValueError):
        ex.chsh(ex.parallel_chsh_configs()[:3], 300, 4, P)


def test_born_chsh_values():
    assert ex.born_chsh(ex.trine_chsh_configs()) == pytest.approx(2.5, abs=1e-12)
    assert ex.born_chsh(ex.parallel_chsh_configs()) == pytest.approx(-2.0, abs=1e-12)
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, a2, b, b2 = rng.uniform(0, 2 * math.pi, 4)
        configs = [MeasurementConfig((x, y)) for x, y in [(a, b), (a, b2), (a2, b2), (a2, b)]]
        assert abs(ex.born_chsh(configs)) <= 2 * math.sqrt(2) + 1e-12


def test_trine_chsh_geometry_angles():
    thetas = [round(math.degrees((c.lab_angles()[1] - c.lab_angles()[0]) % (2 * math.pi)))
              for c in ex.trine_chsh_configs()]
    assert thetas == [120, 240, 120, 0]


def test_singlet_mirror_symmetry():
    yz = ex.sample_array(100, 1e-3, 2, 77)
    config = two_config("ZL,ZR")
    a = ex.run_joint_batch(singlet_branches(2 * math.pi / 3), yz, config, P)
    b = ex.run_joint_batch(singlet_branches(2 * math.pi / 3), -yz, config, P)
    ok = ~(a.ambiguous | b.ambiguous)
    assert np.array_equal(a.signs[ok], -b.signs[ok])
    assert ok.sum() >= 99


def test_mermin_and_ghz4_checks():
    for check, batch, n in [(ex.mermin_check, ex.mermin_batch, 3), (ex.ghz4_check, ex.ghz4_batch, 4)]:
        samples = ex.sample_initials(100, 1e-3, n, seed=n)
        rep = check(samples[0], P)
        assert rep.contradiction and (rep.product_a, rep.product_b) == (1, -1)
        b = batch(ex.sample_array(100, 1e-3, n, n), P)
        ok = ~b.indeterminate
        expected = ex.expected_eigenvalues(b.settings)
        assert np.all(ex.eigen_products(b)[ok] == np.asarray(expected))
        assert b.contradiction[ok].all()
        assert b.report(0) == rep
    assert ex.expected_eigenvalues(("xyy", "yxy", "yyx", "xxx")) == (1, 1, 1, -1)
    assert ex.expected_eigenvalues(("xxxx", "yxyx", "yxxy", "xxyy")) == (-1, -1, -1, 1)


def test_mermin_outcomes_lie_in_basin_list():
    b = ex.mermin_batch(ex.sample_array(50, 1e-3, 3, 21), P)
    for j, s in enumerate(b.settings):
        allowed = set(mermin_branches(s).patterns)
        assert all(tuple(row) in allowed for row in b.signs[:, j])


def test_wrong_sample_sizes():
    with pytest.raises(ValueError):
        ex.mermin_check(FIRST, P)
    with pytest.raises(ValueError):
        ex.ghz4_check(FIRST, P)
    with pytest.raises(ValueError):
        ex.two_particle_contradiction(ex.InitialSample(((0.0, 0.0),) * 3), P)


def test_contradiction_fraction_reproducible():
    a = ex.contradiction_fraction(1000, 5, P)
    b = ex.contradiction_fraction(1000, 5, P)
    assert a == b
    assert 0 < a.value < 1
    with pytest.raises(ValueError):
        ex.contradiction_fraction(999, 5, P)


def test_workers_do_not_change_results():
    yz = ex.sample_array(300, 1e-3, 2, 31)
    config = two_config("ZL,Z'R")
    state = singlet_branches(4 * math.pi / 3)
    serial = ex.run_joint_batch(state, yz, config, P)
    parallel = ex.run_coords(state, ex.project(yz, config), P, workers=2, chunk=64)
    assert np.array_equal(serial.final, parallel.final)


def test_empirical_distribution_and_tv():
    signs = np.array([[1, 1], [1, -1], [1, -1], [-1, 1]])
    amb = np.array([False, False, False, True])
    emp = ex.empirical_distribution(signs, amb)
    assert emp == {(1, 1): 1 / 3, (1, -1): 2 / 3}
    born = born_distribution(singlet_branches(0.0))
    assert ex.total_variation(emp, born) == pytest.approx(0.5 * (1 / 3 + 1 / 6 + 1 / 2))
    assert ex.total_variation(born, born) == 0.0


def test_born_equivariance_small():
    chk = ex.born_equivariance(mermin_branches("yxy"), MeasurementConfig((math.pi / 2, 0.0, math.pi / 2)),
                               2000, 6, P)
    assert chk.passed


def test_atlas_lookup_against_direct_integration():
    atlas = ex.basin_atlas(2 * math.pi / 3, P, half_width=4.5, per_axis=61)
    rng = np.random.default_rng(2)
    coords = rng.normal(0, 1e-3, (400, 2))
    direct = ex.run_coords(singlet_branches(2 * math.pi / 3), coords, P).signs
    looked = atlas.lookup(coords[:, 0], coords[:, 1])
    # a coarse atlas only misjudges points right next to a basin boundary
    assert np.mean(np.any(looked != direct, axis=1)) < 0.05
    node = atlas.lookup(atlas.axis[[10]], atlas.axis[[40]])[0]
    assert np.all(node == np.where(atlas.final[10, 40] > 0, 1, -1))
