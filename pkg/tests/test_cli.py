"""Tests for the experiment-runner command line interface."""

import csv
import json

import numpy as np
import pytest

from volt import cli
from volt.cli import (
    ConfigError,
    config_hash,
    greens_table,
    load_config,
    run_theta_report,
)

BASE_CONFIG = {
    "experiment": "theta_report",
    "domain": {
        "R0": 1.0,
        "holes": [
            {"center": [0.3, 0.3, 0.3]},
            {"center": [-0.3, -0.3, -0.3]},
        ],
    },
    "firing": {"model": "synchronous", "alpha": 1.3, "beta": 0.7},
    "eps_list": [0.2, 0.1],
    "sigma_samples": 8,
    "seed": 0,
}


def write_config(tmp_path, **overrides):
    payload = {**BASE_CONFIG, **overrides}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return path


class TestConfig:
    def test_load_fills_defaults(self, tmp_path):
        config = load_config(write_config(tmp_path))
        assert config["discretization"]["h_over_eps"] == pytest.approx(1 / 7)
        assert config["discretization"]["xi"] == [2, 3, 4, 5]
        assert config["eps_ref"] == 0.2
        assert len(config["hash"]) == 16

    def test_eps_list_must_decrease(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, eps_list=[0.1, 0.2]))

    def test_schema_rejects_bad_experiment(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, experiment="nonsense"))

    def test_schema_rejects_bad_xi(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(
                write_config(tmp_path, discretization={"xi": [7]})
            )

    def test_synchronous_needs_rates(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(
                write_config(tmp_path, firing={"model": "synchronous"})
            )

    def test_hash_stable_and_sensitive(self, tmp_path):
        a = load_config(write_config(tmp_path))
        b = load_config(write_config(tmp_path))
        c = load_config(write_config(tmp_path, seed=1))
        assert a["hash"] == b["hash"]
        assert a["hash"] != c["hash"]
        assert config_hash(a) == a["hash"]


class TestThetaReport:
    def test_report_contents(self, tmp_path):
        config = load_config(write_config(tmp_path))
        payload = run_theta_report(config, tmp_path)
        on_disk = json.loads((tmp_path / "theta.json").read_text())
        assert on_disk["theta1"] == payload["theta1"]
        assert payload["theta1"] == pytest.approx(0.7 / 1.3)
        assert "sync_indep_gap" in payload
        assert payload["sync_indep_gap"]["gap"] > 0

    def test_sigma_samples_near_zero_for_identical_holes(self, tmp_path):
        config = load_config(write_config(tmp_path))
        run_theta_report(config, tmp_path)
        with open(tmp_path / "sigma_samples.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 8
        assert all(abs(float(r["sigma"])) < 1e-14 for r in rows)

    def test_report_deterministic(self, tmp_path):
        config = load_config(write_config(tmp_path))
        run_theta_report(config, tmp_path / "a")
        run_theta_report(config, tmp_path / "b")
        for name in ("theta.json", "sigma_samples.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_dimensional_scale(self, tmp_path):
        config = load_config(
            write_config(tmp_path, dimensional={"phi": 0.3, "l1": 2.0, "D": 0.5})
        )
        payload = run_theta_report(config, tmp_path)
        assert payload["dimensional_scale"] == pytest.approx(0.3 * 2.0 / 0.5)

    def test_matches_sweep_estimate(self, tmp_path):
        """The sweep's expansion column and the report agree on theta."""
        from volt import asymptotics

        config = load_config(write_config(tmp_path))
        payload = run_theta_report(config, tmp_path)
        result = asymptotics.synchronous_expansion(
            [h["center"] for h in BASE_CONFIG["domain"]["holes"]], 1.3, 0.7, 1.0
        )
        assert payload["theta1"] == result.theta1
        assert payload["theta2"] == result.theta2


class TestGreensTable:
    def test_helmholtz_table(self, tmp_path):
        out = tmp_path / "greens.csv"
        greens_table(2.0, 1.0, out, n=10)
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 10
        assert rows[0]["r"] != rows[-1]["r"]
        # the free-space singularity dominates near the center
        assert float(rows[0]["green_center"]) > float(rows[-1]["green_center"])

    def test_neumann_table(self, tmp_path):
        out = tmp_path / "greens0.csv"
        greens_table(0.0, 1.0, out, n=5)
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 5

    def test_cli_entrypoint(self, tmp_path):
        out = tmp_path / "g.csv"
        assert cli.main(["greens", "--lambda", "2.0", "--r0", "1.0",
                         "--out", str(out), "--n", "5"]) == 0
        assert out.exists()


@pytest.mark.slow
class TestEndToEnd:
    @pytest.fixture(scope="class")
    def validate_run(self, tmp_path_factory):
        tmp_path = tmp_path_factory.mktemp("validate")
        payload = {
            "experiment": "validate_shell",
            "domain": {"R0": 1.0, "holes": [{"center": [0.0, 0.0, 0.0]}]},
            "firing": {"model": "synchronous", "alpha": 1.0, "beta": 2.0},
            "discretization": {
                "xi": [2],
                "h_over_eps": 0.25,
                "grading": {"h_max": 0.2, "ratio": 1.3, "collar": 1.0},
            },
            "eps_list": [0.2, 0.15],
            "seed": 0,
            "output_dir": str(tmp_path),
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(payload))
        code = cli.main(["validate", "--config", str(path)])
        return tmp_path, code

    def test_exit_code(self, validate_run):
        _, code = validate_run
        assert code == 0

    def test_csv_schema_and_values(self, validate_run):
        tmp_path, _ = validate_run
        with open(tmp_path / "validate.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        for row in rows:
            assert row["status"] == "ok"
            # very coarse discretization: only sanity-level accuracy expected
            assert float(row["rel_error"]) < 0.25
            assert float(row["residual"]) <= 1e-9
            assert len(row["config_hash"]) == 16

    def test_metadata_written(self, validate_run):
        tmp_path, _ = validate_run
        meta = json.loads((tmp_path / "validate_metadata.json").read_text())
        assert meta["rows"] == 2
        assert meta["failed"] == 0

    def test_figures_rendered(self, validate_run):
        tmp_path, _ = validate_run
        assert (tmp_path / "validate_variation.png").exists()

    def test_wrong_subcommand_rejected(self, validate_run, tmp_path):
        src, _ = validate_run
        with pytest.raises(ConfigError):
            cli.main(["sweep", "--config", str(src / "config.json")])
