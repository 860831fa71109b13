"""End-to-end checks of the command line front end."""

from __future__ import annotations

import json
import subprocess
import sys

import pytest

from repeatr import (
    icc_anova,
    pairwise_distances,
    parametric_f_test,
    rank_discriminability,
    sample_discriminability,
    save_measurements,
)
from repeatr.cli import main

from conftest import random_panel, separated_panel


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_panel(tmp_path, ms, name="panel.csv"):
    path = tmp_path / name
    save_measurements(ms, path)
    return str(path)


def error_payload(err):
    return json.loads(err.strip().splitlines()[-1])


class TestEstimate:
    def test_json_matches_library(self, capsys, tmp_path):
        ms = random_panel(8, 2, seed=3)
        path = write_panel(tmp_path, ms)
        code, out, err = run_cli(capsys, "estimate", path, "--stats", "dhat,dtilde,icc")
        assert code == 0 and err == ""
        payload = json.loads(out)
        assert payload["command"] == "estimate"
        assert (payload["n"], payload["s"], payload["l"]) == (8, 2, 1)
        dm = pairwise_distances(ms)
        assert payload["estimates"]["dhat"]["value"] == sample_discriminability(dm).value
        assert payload["estimates"]["dtilde"]["value"] == rank_discriminability(dm).value
        assert payload["estimates"]["icc"]["value"] == icc_anova(ms).value

    def test_all_stats_two_sessions(self, capsys, tmp_path):
        path = write_panel(tmp_path, random_panel(5, 2, seed=4))
        code, out, _ = run_cli(capsys, "estimate", path)
        assert code == 0
        names = set(json.loads(out)["estimates"])
        assert names == {"dhat", "dtilde", "drs", "fingerprint", "icc", "i2c2"}

    def test_all_stats_many_sessions(self, capsys, tmp_path):
        path = write_panel(tmp_path, random_panel(5, 3, seed=5))
        code, out, _ = run_cli(capsys, "estimate", path)
        assert code == 0
        names = set(json.loads(out)["estimates"])
        assert "drs" not in names and "fingerprint" not in names
        assert {"dtilde:all-batches", "drs:first-last", "drs:first-rest"} <= names

    def test_csv_output(self, capsys, tmp_path):
        path = write_panel(tmp_path, random_panel(5, 2, seed=6))
        code, out, _ = run_cli(capsys, "estimate", path, "--stats", "dhat", "--out", "csv")
        lines = out.strip().splitlines()
        assert code == 0
        assert lines[0] == "statistic,value"
        assert lines[1].startswith("dhat,")

    def test_minimal_separated_panel(self, capsys, tmp_path):
        path = write_panel(tmp_path, separated_panel())
        code, out, _ = run_cli(capsys, "estimate", path, "--stats", "dhat")
        assert code == 0
        assert json.loads(out)["estimates"]["dhat"]["value"] == 1.0

    def test_missing_file(self, capsys, tmp_path):
        code, out, err = run_cli(capsys, "estimate", str(tmp_path / "nope.csv"))
        assert code == 1 and out == ""
        assert "error" in error_payload(err)

    def test_malformed_csv(self, capsys, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("subject,session,f1\na,1\n", encoding="utf-8")
        code, _, err = run_cli(capsys, "estimate", str(path))
        assert code == 1
        assert error_payload(err)["error"] == "RaggedRow"

    def test_unknown_statistic(self, capsys, tmp_path):
        path = write_panel(tmp_path, random_panel(5, 2, seed=7))
        code, _, err = run_cli(capsys, "estimate", path, "--stats", "median")
        assert code == 1
        assert "median" in error_payload(err)["message"]

    def test_icc_needs_univariate(self, capsys, tmp_path):
        path = write_panel(tmp_path, random_panel(5, 2, l=3, seed=8))
        code, _, err = run_cli(capsys, "estimate", path, "--stats", "icc")
        assert code == 1
        assert error_payload(err)["error"] == "DimensionError"

    def test_pca_projection_enables_icc(self, capsys, tmp_path):
        path = write_panel(tmp_path, random_panel(5, 2, l=3, seed=8))
        code, out, _ = run_cli(capsys, "estimate", path, "--stats", "icc", "--pca")
        assert code == 0
        assert "icc" in json.loads(out)["estimates"]

    def test_pearson_metric_needs_two_features(self, capsys, tmp_path):
        path = write_panel(tmp_path, random_panel(5, 2, seed=9))
        code, _, err = run_cli(
            capsys, "estimate", path, "--metric", "one-minus-pearson"
        )
        assert code == 1
        assert error_payload(err)["error"] == "DimensionTooSmall"


class TestTest:
    def test_separated_panel_rejects(self, capsys, tmp_path):
        path = write_panel(tmp_path, separated_panel(n=10))
        code, out, _ = run_cli(
            capsys, "test", path, "--stat", "dtilde", "-B", "199", "--seed", "1"
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["p_value"] == 0.005
        assert payload["reject"] is True
        assert payload["B"] == 199

    def test_reproducible_output(self, capsys, tmp_path):
        path = write_panel(tmp_path, random_panel(8, 2, seed=10))
        _, out1, _ = run_cli(capsys, "test", path, "--stat", "dhat", "--seed", "42")
        _, out2, _ = run_cli(capsys, "test", path, "--stat", "dhat", "--seed", "42")
        assert out1 == out2

    def test_parametric_f(self, capsys, tmp_path):
        ms = random_panel(8, 3, seed=11)
        path = write_panel(tmp_path, ms)
        code, out, _ = run_cli(capsys, "test", path, "--stat", "f-test")
        assert code == 0
        payload = json.loads(out)
        assert payload["p_value"] == parametric_f_test(ms)
        assert payload["observed"] == icc_anova(ms).detail["f_stat"]

    def test_f_test_needs_univariate(self, capsys, tmp_path):
        path = write_panel(tmp_path, random_panel(5, 2, l=2, seed=12))
        code, _, err = run_cli(capsys, "test", path, "--stat", "f-test")
        assert code == 1
        assert error_payload(err)["error"] == "DimensionError"

    def test_unknown_statistic(self, capsys, tmp_path):
        path = write_panel(tmp_path, random_panel(5, 2, seed=13))
        code, _, err = run_cli(capsys, "test", path, "--stat", "median")
        assert code == 1


class TestSimulate:
    def write_config(self, tmp_path, **extra):
        lines = [
            'model = "gaussian-anova"',
            "sigma_sq = 5.0",
            "sigma_mu_sq = 3.0",
            "s = 2",
            "n = [5]",
            'statistics = ["dtilde"]',
            "iterations = 4",
            "B = 20",
            "seed = 7",
        ]
        lines += [f"{k} = {v}" for k, v in extra.items()]
        path = tmp_path / "exp.toml"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return str(path)

    def test_writes_outputs(self, capsys, tmp_path):
        cfg = self.write_config(tmp_path)
        out_dir = tmp_path / "run"
        code, out, _ = run_cli(capsys, "simulate", cfg, "--out", str(out_dir))
        assert code == 0
        payload = json.loads(out)
        assert sorted(payload["files"]) == [
            "config_resolved.toml",
            "power.csv",
            "power.json",
        ]
        power = json.loads((out_dir / "power.json").read_text())
        assert power["cells"][0]["statistic"] == "dtilde"
        csv_text = (out_dir / "power.csv").read_text()
        assert csv_text.startswith("statistic,n,field,value\n")
        resolved = (out_dir / "config_resolved.toml").read_text()
        assert "alpha = 0.05" in resolved

    def test_thread_count_immaterial(self, capsys, tmp_path):
        cfg = self.write_config(tmp_path)
        dirs = {t: tmp_path / f"run{t}" for t in (1, 8)}
        for t, d in dirs.items():
            code, _, _ = run_cli(capsys, "simulate", cfg, "--out", str(d), "--threads", str(t))
            assert code == 0
        for name in ("power.json", "power.csv", "config_resolved.toml"):
            assert (dirs[1] / name).read_bytes() == (dirs[8] / name).read_bytes()

    def test_threads_env_default(self, capsys, tmp_path, monkeypatch):
        cfg = self.write_config(tmp_path)
        monkeypatch.setenv("REPEATR_THREADS", "2")
        code, out, _ = run_cli(capsys, "simulate", cfg, "--out", str(tmp_path / "env"))
        assert code == 0
        assert json.loads(out)["threads"] == 2

    def test_bad_threads_env(self, capsys, tmp_path, monkeypatch):
        cfg = self.write_config(tmp_path)
        monkeypatch.setenv("REPEATR_THREADS", "zero")
        code, _, err = run_cli(capsys, "simulate", cfg, "--out", str(tmp_path / "env"))
        assert code == 1
        assert "REPEATR_THREADS" in error_payload(err)["message"]

    def test_unknown_config_key(self, capsys, tmp_path):
        cfg = self.write_config(tmp_path, walkers=4)
        code, _, err = run_cli(capsys, "simulate", cfg, "--out", str(tmp_path / "x"))
        assert code == 1
        assert "walkers" in error_payload(err)["message"]


class TestTheory:
    def test_d_icc_curve(self, capsys):
        code, out, _ = run_cli(capsys, "theory", "--curve", "d-icc")
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "icc,discr"
        assert len(lines) == 102  # header + 101 grid points
        first = [float(v) for v in lines[1].split(",")]
        last = [float(v) for v in lines[-1].split(",")]
        assert first == [0.0, 0.5]
        assert last == [1.0, 1.0]

    def test_bounds_curve_contains_half_at_zero(self, capsys):
        code, out, _ = run_cli(
            capsys, "theory", "--curve", "bounds", "--dispersion", "9.174311926605505"
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "lambda_tr,lower,upper"
        lam0 = [float(v) for v in lines[1].split(",")]
        assert lam0[0] == 0.0
        assert lam0[1] == pytest.approx(0.5, abs=1e-12)
        assert lam0[2] == pytest.approx(0.5, abs=1e-12)
        mid = [float(v) for v in lines[11].split(",")]
        assert mid[1] < mid[2]

    def test_fingerprint_curve(self, capsys):
        code, out, _ = run_cli(
            capsys, "theory", "--curve", "fingerprint", "--d", "0.7", "--rho", "0.3", "--n-max", "6"
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "n,fingerprint"
        assert len(lines) == 6  # n = 2..6
        n2 = lines[1].split(",")
        assert n2[0] == "2" and float(n2[1]) == pytest.approx(0.7)
        values = [float(line.split(",")[1]) for line in lines[1:]]
        assert values == sorted(values, reverse=True)

    def test_manova_approx_univariate_matches_map(self, capsys):
        from repeatr import discr_from_icc

        code, out, _ = run_cli(
            capsys,
            "theory",
            "--curve",
            "manova-approx",
            "--l",
            "1",
            "--sigma-mu-sq",
            "3.0",
            "--sigma-sq-grid",
            "5:5:1",
        )
        assert code == 0
        row = out.strip().splitlines()[1].split(",")
        assert float(row[1]) == pytest.approx(0.375)
        assert float(row[2]) == pytest.approx(discr_from_icc(0.375), abs=1e-9)

    def test_bad_grid(self, capsys):
        code, _, err = run_cli(capsys, "theory", "--curve", "d-icc", "--grid", "1:two:3")
        assert code == 1
        assert "grid" in error_payload(err)["message"]

    def test_bad_rho_argument(self, capsys):
        code, _, err = run_cli(
            capsys, "theory", "--curve", "manova-approx", "--rho", "lots"
        )
        assert code == 1
        assert "rho" in error_payload(err)["message"]


def test_console_script_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "repeatr.cli", "theory", "--curve", "d-icc", "--grid", "0:1:0.5"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("icc,discr")
