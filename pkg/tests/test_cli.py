import numpy as np
import pytest
import yaml

from crnshare.cli import (EXIT_CHECK_FAILED, EXIT_NOT_CONVERGED, EXIT_OK,
                          EXIT_USAGE, main)
from crnshare.config import REQUIRED_KEYS, ScenarioConfig
from crnshare.policy import load_policy_table

FAST_OVERRIDES = dict(n_subchannels=4, n_bands=2, r_min=2.0,
                      r_min_sweep=[1.0, 2.0], n_frames=400, mc_samples=400,
                      max_iters=400, seed=7)


def write_config(path, **overrides):
    cfg = ScenarioConfig()
    data = {key: getattr(cfg, key) for key in REQUIRED_KEYS}
    data.update(FAST_OVERRIDES)
    data.update(overrides)
    with open(path, "w") as fh:
        yaml.safe_dump(data, fh)
    return path


@pytest.fixture(scope="module")
def optimized(tmp_path_factory):
    """One optimize run shared by the simulate/determinism tests."""
    root = tmp_path_factory.mktemp("cli")
    config = write_config(root / "scenario.yaml")
    out = root / "run1"
    code = main(["optimize", "--config", str(config), "--out", str(out)])
    assert code == EXIT_OK
    return config, out


class TestOptimize:
    def test_outputs(self, optimized):
        config, out = optimized
        assert (out / "dual_trace.csv").exists()
        assert (out / "policy_table.txt").exists()
        policy = load_policy_table(out / "policy_table.txt")
        assert policy.variant == "proposed"
        assert policy.config_hash \
            == ScenarioConfig.from_file(config).scenario_hash()

    def test_trace_format(self, optimized):
        _, out = optimized
        lines = (out / "dual_trace.csv").read_text().splitlines()
        assert lines[0].startswith("# scenario_hash=")
        header = lines[1].split(",")
        assert header[:6] == ["iter", "zeta", "sigma", "epsilon", "eta",
                              "step"]
        first = lines[2].split(",")
        assert int(first[0]) == 0
        assert all(np.isfinite(float(v)) for v in first[1:])

    def test_rerun_byte_identical(self, optimized, tmp_path):
        config, out = optimized
        out2 = tmp_path / "again"
        assert main(["optimize", "--config", str(config),
                     "--out", str(out2)]) == EXIT_OK
        for name in ("dual_trace.csv", "policy_table.txt"):
            assert (out / name).read_bytes() == (out2 / name).read_bytes()

    def test_infeasible_target_exit_code(self, tmp_path):
        config = write_config(tmp_path / "hard.yaml", r_min=500.0,
                              max_iters=60)
        assert main(["optimize", "--config", str(config),
                     "--out", str(tmp_path)]) == EXIT_NOT_CONVERGED

    def test_missing_config_key(self, tmp_path):
        config = tmp_path / "broken.yaml"
        data = {key: getattr(ScenarioConfig(), key) for key in REQUIRED_KEYS}
        del data["alpha"]
        with open(config, "w") as fh:
            yaml.safe_dump(data, fh)
        assert main(["optimize", "--config", str(config),
                     "--out", str(tmp_path)]) == EXIT_USAGE

    def test_missing_config_file(self, tmp_path):
        assert main(["optimize", "--config", str(tmp_path / "nope.yaml"),
                     "--out", str(tmp_path)]) == EXIT_USAGE


class TestSimulate:
    def test_run_and_rerun(self, optimized, tmp_path):
        config, out = optimized
        table = out / "policy_table.txt"
        sim1 = tmp_path / "sim1"
        sim2 = tmp_path / "sim2"
        for sim in (sim1, sim2):
            assert main(["simulate", "--config", str(config),
                         "--policy-table", str(table), "--frames", "300",
                         "--out", str(sim)]) == EXIT_OK
        assert (sim1 / "run_summary.csv").read_bytes() \
            == (sim2 / "run_summary.csv").read_bytes()
        lines = (sim1 / "run_summary.csv").read_text().splitlines()
        assert lines[0].startswith("# scenario_hash=")
        assert lines[1].startswith("policy,n_frames,")
        row = lines[2].split(",")
        assert row[0] == "proposed" and int(row[1]) == 300

    def test_hash_mismatch_refused(self, optimized, tmp_path):
        config, out = optimized
        other = write_config(tmp_path / "other.yaml", r_min=1.0)
        assert main(["simulate", "--config", str(other),
                     "--policy-table", str(out / "policy_table.txt"),
                     "--out", str(tmp_path)]) == EXIT_USAGE
        assert not (tmp_path / "run_summary.csv").exists()

    def test_frames_csv_written(self, optimized, tmp_path):
        config, out = optimized
        frames = tmp_path / "frames.csv"
        assert main(["simulate", "--config", str(config),
                     "--policy-table", str(out / "policy_table.txt"),
                     "--frames", "50", "--out", str(tmp_path),
                     "--frames-csv", str(frames)]) == EXIT_OK
        assert len(frames.read_text().splitlines()) == 2 + 50 * 2


class TestSweep:
    def test_sweep_outputs(self, tmp_path):
        config = write_config(tmp_path / "scenario.yaml",
                              r_min_sweep=[0.5, 1.5], n_frames=300,
                              mc_samples=300, max_iters=300)
        assert main(["sweep", "--config", str(config),
                     "--policy", "proposed,relay-free",
                     "--out", str(tmp_path)]) == EXIT_OK
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0].startswith("# scenario_hash=")
        assert lines[1].startswith(
            "# proposed_vs_relay_free_efficiency_ratio_at_collision_0.01=")
        assert lines[2] == ("policy,r_min,efficiency,collision_per_second,"
                            "collision_se,achieved_rate,feasible")
        rows = [line.split(",") for line in lines[3:]]
        assert len(rows) == 4  # 2 policies x 2 targets
        assert sorted({r[0] for r in rows}) == ["proposed", "relay-free"]
        for row in rows:
            # efficiency = r_min / (W * N)
            assert float(row[2]) == pytest.approx(float(row[1]) / 4.0)

    def test_unknown_policy(self, tmp_path):
        config = write_config(tmp_path / "scenario.yaml")
        assert main(["sweep", "--config", str(config), "--policy", "magic",
                     "--out", str(tmp_path)]) == EXIT_USAGE


class TestValidate:
    def test_validate_passes(self, tmp_path):
        assert main(["validate", "--seed", "11",
                     "--out", str(tmp_path)]) == EXIT_OK
        report = (tmp_path / "validate_report.txt").read_text()
        assert "overall PASS" in report
        assert report.count("PASS") >= 5
        assert "FAIL" not in report
