import numpy as np
import pytest

from oracles import kalman_filter
from robust_ckf.adaptive import AdaptiveConfig
from robust_ckf.ckf import Gaussian
from robust_ckf.harness import (
    OutlierModel,
    RunResult,
    Setup,
    Trajectory,
    measurement_digest,
    monte_carlo,
    position_rmse,
    realization,
    run_filter,
    run_seed,
    simulate_measurements,
    simulate_truth,
)
from robust_ckf.models import NoiseSpec, TargetScenario, linear_model, target_measure, target_process
from robust_ckf.numerics import LengthMismatch

SC = TargetScenario(steps=60)
CLEAN = OutlierModel(probability=0.0)


def short_setup(**kw):
    return Setup(scenario=TargetScenario(steps=80), **kw)


class TestSimulateTruth:
    def test_noise_free_rollout(self):
        traj = simulate_truth(SC, np.zeros((4, 4)), seed=3)
        x = np.array(SC.x0)
        for k in range(1, SC.steps + 1):
            x = target_process(x, SC)
            np.testing.assert_array_equal(traj.states[k], x)
        assert len(traj) == SC.steps + 1
        np.testing.assert_allclose(traj.timestamps[-1], SC.steps * SC.Ts)

    def test_same_seed_identical(self):
        a = simulate_truth(SC, 0.1 * np.eye(4), seed=7)
        b = simulate_truth(SC, 0.1 * np.eye(4), seed=7)
        c = simulate_truth(SC, 0.1 * np.eye(4), seed=8)
        assert a.states.tobytes() == b.states.tobytes()
        assert not np.array_equal(a.states, c.states)

    def test_process_noise_covariance(self):
        Q = np.array([[0.5, 0.1, 0, 0], [0.1, 0.2, 0, 0], [0, 0, 1.0, 0.3], [0, 0, 0.3, 0.4]])
        sc = TargetScenario(steps=100_000, kx=0.0, ky=0.0, g=0.0)
        traj = simulate_truth(sc, Q, seed=1)
        w = traj.states[1:] - target_process(traj.states[:-1], sc)
        np.testing.assert_allclose(np.cov(w.T), Q, atol=0.05 * np.abs(Q).max())


class TestSimulateMeasurements:
    def test_noise_free(self):
        traj = simulate_truth(SC, np.zeros((4, 4)), seed=0)
        z = simulate_measurements(traj, SC, np.zeros((2, 2)), CLEAN, seed=0)
        np.testing.assert_array_equal(z, target_measure(traj.states[1:], SC))

    def test_contamination_fraction(self):
        sc = TargetScenario(steps=10_000, kx=0.0, ky=0.0, g=0.0)
        traj = Trajectory(np.tile([0.0, 0.0, 0.0, 0.0], (10_001, 1)), np.arange(10_001) * 0.1)
        _, hit = simulate_measurements(
            traj, sc, np.eye(2), OutlierModel(probability=0.1), seed=5, return_flags=True
        )
        assert abs(hit.mean() - 0.1) <= 0.01

    def test_measurement_noise_covariance(self):
        traj = Trajectory(np.zeros((100_001, 4)), np.arange(100_001) * 0.1)
        R = np.diag([4.0, 1e-4])
        z = simulate_measurements(traj, SC, R, CLEAN, seed=2)
        clean = target_measure(np.zeros(4), SC)
        np.testing.assert_allclose(np.var(z - clean, axis=0), np.diag(R), rtol=0.05)

    @pytest.mark.parametrize("mode", ["additive_spike", "variance_inflation"])
    def test_outliers_are_large(self, mode):
        traj = Trajectory(np.zeros((5001, 4)), np.arange(5001) * 0.1)
        R = np.diag([1.0, 1e-6])
        z, hit = simulate_measurements(
            traj, SC, R, OutlierModel(0.1, 10.0, mode), seed=9, return_flags=True
        )
        dev = np.abs(z[:, 0] - target_measure(np.zeros(4), SC)[0])
        assert np.median(dev[hit]) > 5 * np.median(dev[~hit])

    def test_bearing_wrapped(self):
        sc = TargetScenario(sx=100.0, sy=0.0, steps=2000)
        traj = Trajectory(np.zeros((2001, 4)), np.arange(2001) * 0.1)
        z = simulate_measurements(traj, sc, np.diag([1.0, 0.01]), CLEAN, seed=0)
        assert np.all(z[:, 1] <= np.pi) and np.all(z[:, 1] > -np.pi)

    @pytest.mark.parametrize("kw", [dict(probability=1.0), dict(magnitude=0.5), dict(mode="burst")])
    def test_model_validation(self, kw):
        with pytest.raises(ValueError):
            OutlierModel(**kw)


class TestRunFilter:
    def test_empty_measurements(self):
        init = Gaussian(SC.x0, np.eye(4))
        for v in ("ckf", "ackf", "cmrackf"):
            r = run_filter(v, SC, np.empty((0, 2)), init, NoiseSpec(np.eye(4), np.eye(2)))
            assert r.steps == 0 and not r.diverged
            np.testing.assert_array_equal(r.estimates, [init.mean])

    def test_ckf_on_linear_system_matches_kalman_filter(self):
        F = np.array([[1.0, 0.1], [0.0, 1.0]])
        H = np.array([[1.0, 0.0]])
        Q, R = 0.01 * np.eye(2), np.array([[0.5]])
        zs = np.random.default_rng(0).normal(size=(50, 1))
        init = Gaussian([0.0, 0.0], np.eye(2))
        r = run_filter("ckf", linear_model(F, H), zs, init, NoiseSpec(Q, R))
        means, _ = kalman_filter(F, H, Q, R, init.mean, init.cov, zs)
        np.testing.assert_allclose(r.estimates[1:], means, atol=1e-8)

    def test_uniform_cmrackf_matches_ackf(self):
        setup = short_setup()
        truth, z = realization(setup, 17)
        cfg = AdaptiveConfig(uniform_weights=True)
        args = (setup.scenario, z, setup.initial_belief(), setup.filter_noise, cfg)
        a = run_filter("ackf", *args)
        c = run_filter("cmrackf", *args)
        np.testing.assert_allclose(c.estimates, a.estimates, atol=1e-10)

    def test_series_lengths(self):
        setup = short_setup()
        truth, z = realization(setup, 1)
        r = run_filter("cmrackf", setup.scenario, z, setup.initial_belief(), setup.filter_noise, truth=truth)
        assert len(r.estimates) == len(truth.states)
        assert len(r.innovations) == len(r.R_diag) == len(r.weights) == setup.scenario.steps
        assert len(r.position_error) == len(truth.states)

    def test_divergence_flagged(self):
        sc = TargetScenario(steps=40, kx=0.15, ky=0.15, x0=(0.0, 0.0, 50.0, 50.0))
        setup = Setup(scenario=sc, outliers=CLEAN)
        with np.errstate(all="ignore"):
            truth = simulate_truth(sc, np.zeros((4, 4)), 0)
            z = np.nan_to_num(target_measure(truth.states[1:], sc), nan=1e300, posinf=1e300)
            r = run_filter("ckf", sc, z, setup.initial_belief(), setup.filter_noise)
        assert r.diverged and r.error
        assert r.steps < sc.steps

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            run_filter("ukf", SC, np.empty((0, 2)), Gaussian(SC.x0, np.eye(4)), NoiseSpec(np.eye(4), np.eye(2)))


class TestPositionRmse:
    @staticmethod
    def result(est):
        return RunResult("ckf", 0, np.empty((0, 4)), np.asarray(est, float), np.empty((0, 2)), np.empty((0, 2)), [])

    def test_exact(self):
        truth = simulate_truth(SC, np.zeros((4, 4)), 0)
        assert position_rmse(self.result(truth.states), truth) == 0.0

    def test_constant_offset(self):
        truth = simulate_truth(SC, np.zeros((4, 4)), 0)
        est = truth.states + np.array([1.0, 5.0, 0.0, 7.0])
        assert position_rmse(self.result(est), truth) == pytest.approx(1.0, abs=1e-12)

    def test_hand_computed(self):
        truth = Trajectory(np.zeros((4, 4)), np.arange(4) * 0.1)
        est = np.zeros((4, 4))
        est[0] = [100, 0, 100, 0]  # the initial belief is not scored
        est[1] = [3, 0, 4, 0]
        est[2] = [0, 9, 0, 9]
        est[3] = [1, 0, 1, 0]
        # squared errors 25, 0, 2 -> sqrt(27 / 3) = 3
        assert position_rmse(self.result(est), truth) == pytest.approx(3.0, abs=1e-12)

    def test_length_mismatch(self):
        truth = Trajectory(np.zeros((4, 4)), np.arange(4) * 0.1)
        with pytest.raises(LengthMismatch):
            position_rmse(self.result(np.zeros((3, 4))), truth)


class TestMonteCarlo:
    def test_single_run_all_variants(self):
        t = monte_carlo(["ckf", "ackf", "cmrackf"], short_setup(), runs=1, base_seed=4)
        assert [r["filter"] for r in t.per_run] == ["ckf", "ackf", "cmrackf"]
        assert len({r["digest"] for r in t.per_run}) == 1
        assert all(r["rmse_m"] >= 0 for r in t.per_run)

    def test_single_variant(self):
        t = monte_carlo(["ckf"], short_setup(), runs=2)
        assert t.variants == ["ckf"] and len(t.per_run) == 2
        assert set(t.mean) == {"ckf"}

    def test_paired_seeds(self):
        t = monte_carlo(["ckf", "cmrackf"], short_setup(), runs=3, base_seed=2)
        for run in range(3):
            digests = {r["digest"] for r in t.per_run if r["run"] == run}
            assert len(digests) == 1
        assert len({r["digest"] for r in t.per_run}) == 3

    def test_deterministic(self):
        a = monte_carlo(["ckf", "ackf"], short_setup(), runs=2, base_seed=9)
        b = monte_carlo(["ckf", "ackf"], short_setup(), runs=2, base_seed=9)
        assert a.per_run == b.per_run

    def test_parallel_matches_serial(self):
        a = monte_carlo(["ckf", "cmrackf"], short_setup(), runs=2, base_seed=1)
        b = monte_carlo(["ckf", "cmrackf"], short_setup(), runs=2, base_seed=1, workers=2)
        assert a.per_run == b.per_run

    def test_seed_derivation(self):
        assert run_seed(0, 0) == run_seed(0, 0)
        assert run_seed(0, 1) != run_seed(1, 0)

    def test_validation(self):
        with pytest.raises(ValueError):
            monte_carlo(["ckf"], short_setup(), runs=0)
        with pytest.raises(ValueError):
            monte_carlo(["kf"], short_setup(), runs=1)


def test_digest_changes_with_data():
    z = np.zeros((3, 2))
    assert measurement_digest(z) == measurement_digest(z.copy())
    z2 = z.copy()
    z2[1, 1] = 1e-300
    assert measurement_digest(z) != measurement_digest(z2)
