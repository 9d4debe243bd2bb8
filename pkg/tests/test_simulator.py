import numpy as np
import pytest

from crnshare import channel, simulator
from crnshare.allocator import DualPoint
from crnshare.config import ScenarioConfig
from crnshare.policy import Policy
from crnshare.rngtools import substream
from crnshare.simulator import (calibrate_baseline, run_frame, run_policy,
                                sample_paths_batch, time_hopping_offsets)
from crnshare.simulator import _interval_collision
from crnshare.traffic import ACTIVE, IDLE, collision_time

SMALL = dict(n_subchannels=4, n_bands=2, mc_samples=500, max_iters=400,
             r_min=2.0)


def small_cfg(**kw):
    base = dict(SMALL)
    base.update(kw)
    return ScenarioConfig(**base)


def proposed_policy(cfg, nu=None):
    if nu is None:
        nu = DualPoint(1.0, 1.0, 1.0, 1.0)
    return Policy("proposed", cfg.scenario_hash(), dual=nu)


class TestSamplePaths:
    def test_shapes_and_coverage(self):
        cfg = small_cfg()
        paths = sample_paths_batch(cfg.traffic_params(), 50, 2,
                                   substream(1, "traffic"))
        assert paths.initial.shape == (50, 2)
        assert np.all(np.diff(paths.times, axis=2) > 0)
        assert np.all(paths.times[..., -1] >= paths.horizon)

    def test_sensing_at_zero_is_initial(self):
        cfg = small_cfg()
        paths = sample_paths_batch(cfg.traffic_params(), 40, 2,
                                   substream(2, "traffic"))
        assert np.array_equal(paths.sensing(0.0), paths.initial)

    def test_stationary_marginals(self):
        cfg = small_cfg(lambda_tf=1.0, mu_tf=3.0)
        params = cfg.traffic_params()
        paths = sample_paths_batch(params, 40000, 2, substream(3, "traffic"))
        for at in (0.0, 0.5, 1.0):
            frac = paths.sensing(at).mean()
            assert frac == pytest.approx(params.stationary_active, abs=0.01)

    def test_trajectory_extraction(self):
        cfg = small_cfg()
        paths = sample_paths_batch(cfg.traffic_params(), 5, 2,
                                   substream(4, "traffic"))
        traj = paths.trajectory(3, 1)
        assert traj.initial == paths.initial[3, 1]
        assert traj.state_at(0.0) == traj.initial


class TestIntervalCollision:
    def test_matches_scalar_reference(self):
        cfg = small_cfg()
        rng = substream(5, "traffic")
        paths = sample_paths_batch(cfg.traffic_params(), 60, 2, rng)
        a = rng.uniform(0.0, 0.5, size=(60, 2))
        b = a + rng.uniform(0.0, 0.5, size=(60, 2))
        batch = _interval_collision(paths.initial, paths.times, a, b)
        from crnshare.traffic import IntervalSet
        for f in range(60):
            for m in range(2):
                ref = collision_time(paths.trajectory(f, m),
                                     IntervalSet(((a[f, m], b[f, m]),)))
                assert batch[f, m] == pytest.approx(ref, abs=1e-12)

    def test_empty_interval(self):
        cfg = small_cfg()
        paths = sample_paths_batch(cfg.traffic_params(), 10, 2,
                                   substream(6, "traffic"))
        zeros = np.full((10, 2), 0.3)
        out = _interval_collision(paths.initial, paths.times, zeros, zeros)
        assert np.all(out == 0.0)


class TestTimeHopping:
    def test_zero_theta_empty(self):
        cfg = small_cfg()
        iv = time_hopping_offsets(0.0, 1, cfg.traffic_params(),
                                  substream(7, "hopping"))
        assert iv.measure == 0.0

    def test_full_phase(self):
        cfg = small_cfg()
        iv = time_hopping_offsets(0.5, 1, cfg.traffic_params(),
                                  substream(8, "hopping"))
        assert iv.intervals == ((0.0, 0.5),)

    def test_interval_inside_phase(self):
        cfg = small_cfg(alpha=0.4)
        rng = substream(9, "hopping")
        params = cfg.traffic_params()
        starts = []
        for _ in range(500):
            iv = time_hopping_offsets(0.2, 2, params, rng)
            (lo, hi), = iv.intervals
            assert 0.4 <= lo and hi <= 1.0 + 1e-12
            assert hi - lo == pytest.approx(0.2)
            starts.append(lo)
        # uniform placement over [0.4, 0.8]
        assert np.mean(starts) == pytest.approx(0.6, abs=0.02)

    def test_hopping_collision_matches_stationary_mean(self):
        # random placement without sensing collides at the stationary rate:
        # E[collision/frame] = M * (theta1 + theta2) * Tf * P(active)
        cfg = small_cfg(lambda_tf=1.0, mu_tf=1.0)
        theta = 0.1
        pol = Policy("time-hopping", cfg.scenario_hash(),
                     dual=DualPoint(0.0, 0.0, 1.0, 1.0), theta=theta)
        summary = run_policy(pol, cfg, 20000, seed=1234)
        expected = cfg.n_bands * 2 * theta * 0.5
        assert abs(summary.collision_per_second - expected) \
            < 3 * summary.collision_se + 1e-12


class TestRunPolicy:
    def test_shutdown_policy_all_zero(self):
        cfg = small_cfg()
        pol = proposed_policy(cfg, DualPoint(0.0, 0.0, 1.0, 1.0))
        summary = run_policy(pol, cfg, 200)
        assert summary.collision_per_second == 0.0
        assert summary.rate1_mean == 0.0
        assert summary.mean_source_power == 0.0

    def test_deterministic_under_seed(self):
        cfg = small_cfg()
        pol = proposed_policy(cfg)
        a = run_policy(pol, cfg, 300, seed=5)
        b = run_policy(pol, cfg, 300, seed=5)
        assert a == b

    def test_seed_matters(self):
        cfg = small_cfg()
        pol = proposed_policy(cfg)
        a = run_policy(pol, cfg, 300, seed=5)
        b = run_policy(pol, cfg, 300, seed=6)
        assert a.collision_per_second != b.collision_per_second

    def test_relay_free_spends_no_relay_power(self):
        cfg = small_cfg()
        pol = Policy("relay-free", cfg.scenario_hash(),
                     dual=DualPoint(1.0, 1.0, 1.0, 1.0))
        summary = run_policy(pol, cfg, 300)
        assert summary.mean_relay_power == 0.0

    def test_achieved_rate_is_min(self):
        cfg = small_cfg()
        summary = run_policy(proposed_policy(cfg), cfg, 500)
        assert summary.achieved_rate \
            == pytest.approx(min(summary.rate1_mean, summary.rate2_mean))

    def test_matches_scalar_frame_replay(self):
        # the vectorized path must agree frame-by-frame with run_frame on
        # the same sampled gains and traffic paths
        cfg = small_cfg()
        pol = proposed_policy(cfg)
        seed, n = 77, 40
        summary = run_policy(pol, cfg, n, seed=seed)

        gains_rng = substream(seed, "channel")
        traffic_rng = substream(seed, "traffic")
        params = cfg.traffic_params()
        g_sr, g_rd, g_sd = channel.sample_gains_batch(cfg.channel_params(),
                                                      n, gains_rng)
        paths = sample_paths_batch(params, n, cfg.n_bands, traffic_rng)
        y = paths.sensing(cfg.alpha * cfg.frame_duration)
        colls, r1s, r2s = [], [], []
        for f in range(n):
            nsi = channel.NetworkStateInfo(
                g_sr=g_sr[f], g_rd=g_rd[f], g_sd=g_sd[f],
                x=paths.initial[f], y=y[f])
            trajs = [paths.trajectory(f, m) for m in range(cfg.n_bands)]
            res = run_frame(pol, nsi, trajs, cfg)
            colls.append(res.collision)
            r1s.append(res.rate1_term)
            r2s.append(res.rate2_term)
        assert summary.collision_per_second \
            == pytest.approx(np.mean(colls), abs=1e-10)
        assert summary.rate1_mean == pytest.approx(np.mean(r1s), abs=1e-10)
        assert summary.rate2_mean == pytest.approx(np.mean(r2s), abs=1e-10)

    def test_frames_csv(self, tmp_path):
        cfg = small_cfg()
        path = tmp_path / "frames.csv"
        run_policy(proposed_policy(cfg), cfg, 20, frames_csv=path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# scenario_hash=")
        assert lines[1].startswith("frame,band,")
        assert len(lines) == 2 + 20 * cfg.n_bands

    def test_rejects_zero_frames(self):
        cfg = small_cfg()
        with pytest.raises(ValueError):
            run_policy(proposed_policy(cfg), cfg, 0)


class TestCalibrateBaseline:
    def test_zero_target_time_hopping(self):
        cfg = small_cfg()
        cal = calibrate_baseline("time-hopping", 0.0, cfg)
        assert cal.feasible and cal.policy.theta == 0.0

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            calibrate_baseline("mystery", 1.0, small_cfg())

    def test_time_hopping_hits_target(self):
        cfg = small_cfg(r_min=1.0, stop_tol=1e-2)
        cal = calibrate_baseline("time-hopping", 1.0, cfg)
        assert cal.feasible
        assert 0.0 < cal.policy.theta <= 0.5
        summary = run_policy(cal.policy, cfg, 2000)
        assert summary.achieved_rate \
            >= 1.0 - 3 * summary.achieved_rate_se - 2e-2

    def test_proposed_calibration_converges(self):
        cfg = small_cfg(r_min=1.0)
        cal = calibrate_baseline("proposed", 1.0, cfg)
        assert cal.feasible
        assert cal.policy.variant == "proposed"
