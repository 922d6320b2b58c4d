"""Command-line interface: subcommands, exit codes and file round trips."""
import json
import subprocess
import sys

import numpy as np
import pytest

from fraclt.cli import default_threads, main
from fraclt.fbm import read_path_csv, simulate_fbm
from fraclt.quadvar import centered_quadvar_abs, scaled_statistic
from fraclt.statistics import read_statistic_csv, v_statistic_bivariate


@pytest.fixture
def path_csv(tmp_path):
    dest = tmp_path / "path.csv"
    assert main(["simulate", "--hurst", "0.3", "--n", "4096", "--seed", "1", "--out", str(dest)]) == 0
    return dest


class TestSimulate:
    def test_rows(self, path_csv):
        lines = path_csv.read_text().splitlines()
        assert lines[0] == "t,x"
        assert len(lines) - 1 == 4098

    def test_matches_library(self, path_csv):
        back = read_path_csv(path_csv, hurst=0.3)
        np.testing.assert_array_equal(back.values, simulate_fbm(4096, 0.3, seed=1).values)

    def test_missing_seed(self, tmp_path, capsys):
        assert main(["simulate", "--hurst", "0.3", "--n", "64", "--out", str(tmp_path / "p.csv")]) == 1
        assert "--seed" in capsys.readouterr().err

    def test_unknown_flag(self, tmp_path):
        assert main(["simulate", "--hurst", "0.3", "--n", "64", "--seed", "1", "--bogus",
                     "--out", str(tmp_path / "p.csv")]) == 1

    def test_bad_hurst(self, tmp_path, capsys):
        assert main(["simulate", "--hurst", "1.2", "--n", "64", "--seed", "1", "--out", str(tmp_path / "p.csv"),
                     "--json-errors"]) == 1
        payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert payload["exit_code"] == 1 and payload["error"] == "ConfigurationError"


class TestPathCommands:
    def test_vstat_round_trip_is_bit_identical(self, path_csv, tmp_path, capsys):
        out = tmp_path / "v.csv"
        assert main(["vstat", "--path", str(path_csv), "--hurst", "0.3", "--f", "f2", "--out", str(out)]) == 0
        printed = float(capsys.readouterr().out.strip())
        direct = v_statistic_bivariate(simulate_fbm(4096, 0.3, seed=1), "f2")
        back = read_statistic_csv(out)
        np.testing.assert_array_equal(back.values, direct.values)
        assert printed == direct.final

    def test_vstat_kernel(self, path_csv, tmp_path, capsys):
        out = tmp_path / "v.csv"
        assert main(["vstat", "--path", str(path_csv), "--hurst", "0.3", "--f", "gauss", "--un-exponent", "0.2",
                     "--out", str(out)]) == 0
        assert float(capsys.readouterr().out) > 0

    def test_quadvar(self, path_csv, tmp_path, capsys):
        out = tmp_path / "s.csv"
        assert main(["quadvar", "--path", str(path_csv), "--hurst", "0.3", "--out", str(out)]) == 0
        expected = scaled_statistic(centered_quadvar_abs(simulate_fbm(4096, 0.3, seed=1)))
        np.testing.assert_array_equal(read_statistic_csv(out).values, expected.values)
        assert float(capsys.readouterr().out) == expected.final

    def test_quadvar_unscaled_and_regime(self, path_csv, tmp_path):
        assert main(["quadvar", "--path", str(path_csv), "--hurst", "0.3", "--unscaled",
                     "--out", str(tmp_path / "a.csv")]) == 0
        assert main(["quadvar", "--path", str(path_csv), "--hurst", "0.3", "--regime", "clt",
                     "--out", str(tmp_path / "b.csv")]) == 0
        a = read_statistic_csv(tmp_path / "a.csv").values
        b = read_statistic_csv(tmp_path / "b.csv").values
        np.testing.assert_allclose(b, a / 64.0)

    def test_localtime(self, path_csv, tmp_path, capsys):
        out = tmp_path / "lt.csv"
        assert main(["localtime", "--path", str(path_csv), "--hurst", "0.3", "--out", str(out)]) == 0
        est = json.loads(capsys.readouterr().out)
        # a CSV path has no finer grid, so the doubled-grid stability check interpolates
        assert est["value"] >= 0 and est["method"] == "exact/interpolated"
        assert read_statistic_csv(out).values[-1] == pytest.approx(est["value"])

    def test_missing_path_file(self, tmp_path):
        assert main(["localtime", "--path", str(tmp_path / "none.csv"), "--hurst", "0.3"]) == 1


class TestConstants:
    @pytest.mark.parametrize("argv, text", [
        (["constants"], "0.797885"),
        (["constants", "--f", "f2"], "0.531923"),
        (["constants", "--quantity", "crossing"], "-1.063846"),
        (["constants", "--quantity", "v2", "--hurst", "0.6", "--digits", "10"], "2.1642616414"),
        (["constants", "--f", "gauss"], "1.000000"),
    ])
    def test_values(self, argv, text, capsys):
        assert main(argv) == 0
        assert capsys.readouterr().out.strip() == text

    def test_v2_needs_hurst(self):
        assert main(["constants", "--quantity", "v2"]) == 1

    def test_v2_outside_range(self):
        assert main(["constants", "--quantity", "v2", "--hurst", "0.8"]) == 1


class TestExperiment:
    def test_prop2_clt(self, tmp_path):
        out, csv_out = tmp_path / "r.json", tmp_path / "r.csv"
        code = main(["experiment", "--name", "prop2-clt", "--hurst", "0.6", "--reps", "200", "--seed", "7",
                     "--n-grid", "256,1024", "--out", str(out), "--csv", str(csv_out), "--threads", "2"])
        report = json.loads(out.read_text())
        assert report["verdicts"]
        assert code == (0 if all(v["passed"] for v in report["verdicts"]) else 2)
        assert csv_out.read_text().startswith("n,metric")

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "e.cfg"
        cfg.write_text("name = thm1\nhurst = 0.3\nn_grid = 64,256\nreplicates = 10\nseed = 2\nfunctional = f2\n")
        out = tmp_path / "r.json"
        main(["experiment", "--config", str(cfg), "--reps", "8", "--out", str(out), "--allow-failures"])
        report = json.loads(out.read_text())
        assert report["config"]["replicates"] == 8 and report["config"]["functional"] == "f2"

    def test_seed_required(self, tmp_path):
        assert main(["experiment", "--hurst", "0.3", "--out", str(tmp_path / "r.json")]) == 1

    def test_failed_verdict_exits_two(self, tmp_path, capsys):
        argv = ["experiment", "--name", "prop2", "--hurst", "0.6", "--path-hurst", "0.75", "--reps", "200",
                "--seed", "3", "--n-grid", "256,1024", "--out", str(tmp_path / "r.json"), "--json-errors"]
        assert main(argv) == 2
        assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["exit_code"] == 2
        assert main(argv + ["--allow-failures"]) == 0

    def test_regime_mismatch_rejected(self, tmp_path):
        argv = ["experiment", "--name", "prop2", "--hurst", "0.6", "--check-regime", "lt", "--reps", "40",
                "--seed", "3", "--n-grid", "64,128", "--out", str(tmp_path / "r.json")]
        assert main(argv) == 1

    def test_audit(self, tmp_path):
        out = tmp_path / "a.json"
        assert main(["audit", "--hurst", "0.5", "--n", "64", "--reps", "3000", "--seed", "1", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["verdicts"][0]["rule"] == "audit.covariance"

    def test_threads_do_not_change_output(self, tmp_path):
        outs = []
        for t in ("1", "3"):
            out = tmp_path / f"r{t}.json"
            main(["experiment", "--hurst", "0.3", "--reps", "10", "--seed", "5", "--n-grid", "64,256",
                  "--out", str(out), "--threads", t, "--allow-failures"])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestMisc:
    def test_default_threads_env(self, monkeypatch):
        monkeypatch.setenv("FRACLT_THREADS", "3")
        assert default_threads() == 3

    def test_help_exits_zero(self):
        proc = subprocess.run([sys.executable, "-m", "fraclt.cli", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0 and "simulate" in proc.stdout

    def test_no_subcommand(self):
        assert main([]) == 1
