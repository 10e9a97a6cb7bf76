import json

import numpy as np
import pandas as pd
import pytest

from outputs import read_manifest
from simulators import GARCH_STUDY, simulate_batch
from spectral_tail import int_list, main, read_config


def _run(*argv):
    return main([str(arg) for arg in argv])


class TestParsing:
    def test_int_list_range(self):
        assert int_list("1..4") == [1, 2, 3, 4]
        assert int_list("-1,1") == [-1, 1]

    def test_int_list_empty(self):
        with pytest.raises(Exception):
            int_list(",")

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as info:
            _run("forecast")
        assert info.value.code == 2

    def test_read_dotenv_config(self, write_csv):
        path = write_csv("run.env", "THRESHOLD_LEVEL=5\n# comment\nlags=1\n")
        assert read_config(path) == {"THRESHOLD_LEVEL": "5", "LAGS": "1"}

    def test_read_manifest_config_keeps_nulls(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"command": "apply", "config": {"rescale_from": None, "lags": [1, 2],
                                                                   "no_garch": True}}), encoding="utf-8")
        assert read_config(path) == {"RESCALE_FROM": None, "LAGS": "1,2", "NO_GARCH": "true"}


class TestEstimate:
    def test_fixture(self, series_csv, tmp_path):
        out = tmp_path / "est"
        assert _run("estimate", "--input", series_csv, "--threshold-level", 5, "--grid", 0, "--out", out) == 0
        frame = pd.read_csv(out / "estimates.csv")
        assert len(frame) == 1
        assert frame["value"].iloc[0] == pytest.approx(2 / 3, abs=1e-4)
        assert frame["exceedance_count"].iloc[0] == 3

    def test_one_row_per_cell(self, series_csv, tmp_path):
        out = tmp_path / "grid"
        assert _run("estimate", "--input", series_csv, "--threshold-level", 5, "--lags=-1,1", "--grid=-1,0,1",
                    "--out", out) == 0
        frame = pd.read_csv(out / "estimates.csv")
        assert len(frame) == 6
        assert set(frame["lag"]) == {-1, 1}

    def test_manifest(self, series_csv, tmp_path):
        out = tmp_path / "manifest"
        _run("estimate", "--input", series_csv, "--threshold-level", 5, "--seed", 9, "--out", out)
        manifest = read_manifest(out)
        assert manifest["subcommand"] == "estimate"
        assert manifest["seed"] == 9
        assert len(manifest["config_sha256"]) == 64
        int(manifest["config_sha256"], 16)
        assert manifest["config"]["threshold_level"] == 5.0
        assert set(manifest["outputs"]) == {"estimates.csv", "estimates.json"}
        assert manifest["started"] and manifest["finished"]

    def test_backward_with_fixed_alpha(self, series_csv, tmp_path):
        out = tmp_path / "backward"
        _run("estimate", "--input", series_csv, "--threshold-level", 5, "--estimator", "backward", "--alpha", 1,
             "--out", out)
        with open(out / "estimates.json", "r", encoding="utf-8") as f:
            payload = json.load(f)
        assert payload["alpha"] == 1.0
        assert payload["cells"][0]["value"] == pytest.approx(0.87778, abs=1e-5)

    def test_no_exceedances(self, series_csv, tmp_path, capsys):
        out = tmp_path / "none"
        assert _run("estimate", "--input", series_csv, "--threshold-level", 100, "--out", out) == 1
        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert error["error"] == "NoExceedances"
        assert not (out / "manifest.json").exists()

    def test_missing_input(self, tmp_path, capsys):
        assert _run("estimate", "--input", tmp_path / "absent.csv", "--out", tmp_path / "x") == 1
        assert "error" in json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestConfig:
    def test_config_supplies_defaults(self, series_csv, write_csv, tmp_path):
        config = write_csv("run.env", "THRESHOLD_LEVEL=5\nGRID=0\n")
        out = tmp_path / "cfg"
        assert _run("estimate", "--config", config, "--input", series_csv, "--out", out) == 0
        assert pd.read_csv(out / "estimates.csv")["value"].iloc[0] == pytest.approx(2 / 3, abs=1e-4)

    def test_flags_override_config(self, series_csv, write_csv, tmp_path):
        config = write_csv("run.env", "THRESHOLD_LEVEL=5\nGRID=0\n")
        out = tmp_path / "flags"
        assert _run("estimate", "--config", config, "--input", series_csv, "--grid", 0.25, "--out", out) == 0
        assert pd.read_csv(out / "estimates.csv")["value"].iloc[0] == 1.0

    def test_unused_keys_are_reported(self, series_csv, write_csv, tmp_path, capsys):
        config = write_csv("run.env", "THRESHOLD_LEVEL=5\nMC_REPS=10\n")
        assert _run("estimate", "--config", config, "--input", series_csv, "--out", tmp_path / "unused") == 0
        assert "MC_REPS" in capsys.readouterr().out

    def test_store_true_from_config(self, series_csv, write_csv, tmp_path):
        config = write_csv("run.env", "THRESHOLD_LEVEL=5\nCLAMP=true\n")
        out = tmp_path / "clamp"
        _run("estimate", "--config", config, "--input", series_csv, "--out", out)
        assert read_manifest(out)["config"]["clamp"] is True

    def test_missing_config(self, series_csv, tmp_path):
        assert _run("estimate", "--config", tmp_path / "nope.env", "--input", series_csv,
                    "--out", tmp_path / "o") == 1


class TestSimulate:
    def test_rerun_from_manifest_is_identical(self, tmp_path):
        first, second = tmp_path / "first", tmp_path / "second"
        assert _run("simulate", "--preset", "sv-study", "--length", 300, "--burn-in", 50, "--seed", 3,
                    "--out", first) == 0
        assert _run("simulate", "--config", first / "manifest.json", "--out", second) == 0
        assert (first / "series.csv").read_bytes() == (second / "series.csv").read_bytes()
        assert read_manifest(second)["config"]["preset"] == "sv-study"

    def test_custom_model(self, tmp_path):
        out = tmp_path / "custom"
        assert _run("simulate", "--model", "garch11", "--innovation", "normal", "--omega", 0.1, "--alpha1", 0.1,
                    "--beta1", 0.8, "--length", 100, "--burn-in", 10, "--out", out) == 0
        assert len(pd.read_csv(out / "series.csv")) == 100

    def test_invalid_model(self, tmp_path, capsys):
        assert _run("simulate", "--model", "garch11", "--innovation", "normal", "--omega", 0, "--alpha1", 0.1,
                    "--beta1", 0.8, "--out", tmp_path / "bad") == 1
        assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "InvalidParams"


class TestCi:
    def test_zero_law_is_degenerate(self, series_csv, tmp_path):
        out = tmp_path / "ci"
        assert _run("ci", "--input", series_csv, "--threshold-level", 5, "--grid", 0, "--estimator", "forward",
                    "--scheme", "multiplier", "--block", 7, "--law", "zero", "--replicates", 20, "--out", out) == 0
        row = pd.read_csv(out / "intervals.csv").iloc[0]
        assert row["lower"] == pytest.approx(2 / 3, abs=1e-4)
        assert row["upper"] == pytest.approx(2 / 3, abs=1e-4)
        assert row["method"] == "reflected"


class TestIndependence:
    def test_analytic_column(self, series_csv, tmp_path):
        out = tmp_path / "indep"
        assert _run("independence", "--input", series_csv, "--threshold-level", 5, "--mc-reps", 20,
                    "--out", out) == 0
        row = pd.read_csv(out / "independence.csv").iloc[0]
        assert row["analytic"] == pytest.approx(3 / 14)


class TestStudies:
    SMALL_ORACLE = ("--oracle-replicates", 4, "--oracle-length", 500, "--burn-in", 100)

    def test_study_rmse(self, tmp_path):
        out = tmp_path / "rmse"
        assert _run("study-rmse", "--n", 400, "--reps", 2, "--lags", 1, "--grid=-1,1", *self.SMALL_ORACLE,
                    "--out", out) == 0
        frame = pd.read_csv(out / "study_rmse.csv")
        assert len(frame) == 4
        assert set(frame["estimator"]) == {"forward", "backward"}

    def test_study_coverage(self, tmp_path):
        out = tmp_path / "coverage"
        assert _run("study-coverage", "--n", 400, "--reps", 2, "--lags", "1,2", "--scheme", "stationary,multiplier",
                    "--block", 20, "--replicates", 20, *self.SMALL_ORACLE, "--out", out) == 0
        assert len(pd.read_csv(out / "study_coverage.csv")) == 4
        with open(out / "study_coverage.json", "r", encoding="utf-8") as f:
            assert json.load(f)["metadata"]["study"] == "coverage"


@pytest.fixture
def price_file(tmp_path):
    returns = 0.01 * simulate_batch(GARCH_STUDY, 1500, 200, 5, [0])[0]
    prices = pd.DataFrame({
        "date": pd.bdate_range("2001-01-02", periods=returns.size + 1).strftime("%Y-%m-%d"),
        "price": 100 * np.exp(np.concatenate([[0.0], np.cumsum(returns)])),
    })
    path = tmp_path / "prices.csv"
    prices.to_csv(path, index=False)
    return path


class TestApply:
    SMALL = ("--threshold-quantile", 0.95, "--lags", 1, "--block", 50, "--replicates", 20,
             "--independence-reps", 10, "--no-garch", "--aparch", "none")

    def test_price_file(self, price_file, tmp_path):
        out = tmp_path / "apply"
        assert _run("apply", "--input", price_file, "--rescale-from", 0.9, "--burn-in", 300, *self.SMALL,
                    "--out", out) == 0
        assert len(pd.read_csv(out / "apply_estimates.csv")) == 6
        assert len(pd.read_csv(out / "apply_residuals.csv")) == 2
        with open(out / "apply_summary.json", "r", encoding="utf-8") as f:
            assert json.load(f)["alpha"] > 0
        assert read_manifest(out)["config"]["burn_in"] == 300

    def test_rerun_from_manifest_keeps_unset_options(self, price_file, tmp_path):
        first, second = tmp_path / "first", tmp_path / "second"
        assert _run("apply", "--input", price_file, "--rescale-from", "none", *self.SMALL, "--out", first) == 0
        assert read_manifest(first)["config"]["rescale_from"] is None
        assert _run("apply", "--config", first / "manifest.json", "--out", second) == 0
        assert read_manifest(second)["config"]["rescale_from"] is None
        assert (first / "apply_estimates.csv").read_bytes() == (second / "apply_estimates.csv").read_bytes()

    def test_unknown_aparch_preset(self, price_file, tmp_path, capsys):
        out = tmp_path / "bad"
        assert _run("apply", "--input", price_file, "--aparch", "sp600-aparch", "--out", out) == 1
        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert error["error"] == "InvalidParams"
        assert "sp600-aparch" in error["message"]
        assert not (out / "manifest.json").exists()
