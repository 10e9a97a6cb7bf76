from dataclasses import replace

import numpy as np
import pytest

import study
from bootstrap import BootstrapScheme, SchemeKind
from core import Conditioning, EstimatorKind, SeriesWindow, Target, ThresholdSpec, derive_rng, resolve_threshold
from errors import NoExceedances
from simulators import GARCH_STUDY, MODEL_PRESETS, Innovation, ModelSpec
from study import (
    OracleResult,
    OracleSpec,
    independence_quantile,
    independence_reference,
    oracle_table,
    pooled_quantile,
    preasymptotic_truth,
    study_coverage,
    study_estimators,
)

IID_T = ModelSpec.iid(Innovation.STD_T, 4.0)


def _constant_rows(model, length, burn_in, seed, replicates):
    return np.array([np.full(length, 2.0 + r) for r in replicates])


class TestOracle:
    def test_iid_abs_survival(self):
        spec = OracleSpec(IID_T, replicates=100, length=10000, quantile=0.95, target=Target.ABS_SURVIVAL, seed=1)
        result = preasymptotic_truth(spec, 1.0, 1)
        assert result.value == pytest.approx(0.025, abs=0.005)
        assert result.used == 100 and result.skipped == 0
        assert result.std_error > 0

    def test_perfect_dependence(self, monkeypatch):
        monkeypatch.setattr(study, "simulate_batch", _constant_rows)
        spec = OracleSpec(IID_T, replicates=10, length=50, quantile=0.5, lags=(1, 2), grid=(1.0, 3.0))
        table = oracle_table(spec)
        for t in (1, 2):
            assert table[(1.0, t)].value == 1.0
            assert table[(3.0, t)].value == 1.0

    def test_per_series_thresholds_skip_empty_series(self, monkeypatch):
        monkeypatch.setattr(study, "simulate_batch", _constant_rows)
        spec = OracleSpec(IID_T, replicates=5, length=20, quantile=0.5, pooled=False)
        with pytest.raises(NoExceedances):
            oracle_table(spec)

    def test_pooled_quantile_is_exact(self):
        spec = OracleSpec(IID_T, replicates=7, length=300, quantile=0.9, seed=4, burn_in=0)
        # the default lag of 1 adds one buffer value on each side of every series
        values = np.abs(study.simulate_batch(IID_T, 302, 0, 4, list(range(7)))[:, 1:301])
        assert pooled_quantile(spec) == pytest.approx(np.quantile(values, 0.9), rel=1e-12)

    def test_independent_of_workers(self):
        spec = OracleSpec(GARCH_STUDY, replicates=4, length=500, quantile=0.9, lags=(1,), grid=(0.0,), burn_in=100)
        serial = oracle_table(spec, workers=1)
        parallel = oracle_table(spec, workers=2)
        assert serial[(0.0, 1)].value == parallel[(0.0, 1)].value

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            OracleSpec(IID_T, quantile=1.0)
        with pytest.raises(ValueError):
            OracleSpec(IID_T, replicates=0)

    @pytest.mark.slow
    def test_std_error_shrinks_with_replicates(self):
        def se(replicates):
            spec = OracleSpec(IID_T, replicates=replicates, length=2000, quantile=0.95, seed=17, burn_in=0)
            return preasymptotic_truth(spec, 1.0, 1).std_error

        base, doubled, quadrupled = se(200), se(400), se(800)
        assert doubled / base == pytest.approx(1 / np.sqrt(2), rel=0.3)
        assert quadrupled / base == pytest.approx(0.5, rel=0.3)

    @pytest.mark.slow
    def test_leverage_asymmetry(self):
        def gap(model):
            spec = OracleSpec(model, quantile=0.98, target=Target.SURVIVAL, lags=(1,), grid=(1.0,), seed=31)
            negative = preasymptotic_truth(replace(spec, conditioning=Conditioning.NEGATIVE), 1.0, 1)
            positive = preasymptotic_truth(replace(spec, conditioning=Conditioning.POSITIVE), 1.0, 1)
            return negative.value - positive.value, np.hypot(negative.std_error, positive.std_error)

        aparch_gap, aparch_se = gap(MODEL_PRESETS["sp500-aparch"])
        garch_gap, garch_se = gap(MODEL_PRESETS["sp500-garch"])
        assert aparch_gap >= 3 * aparch_se
        assert abs(garch_gap) < 3 * garch_se


class TestStudyEstimators:
    def test_single_replicate(self):
        truth = {(1.0, 1): OracleResult(0.5, 0.0, 1, 0)}
        report = study_estimators(IID_T, 500, 0.9, [1], [1.0], reps=1, truth=truth, burn_in=0)
        assert [row["estimator"] for row in report.rows] == ["forward", "backward"]
        for row in report.rows:
            assert row["sd"] == 0.0
            assert row["rmse"] == pytest.approx(abs(row["bias"]))
        assert report.cell(estimator="forward")["rmse_ratio"] == 1.0

    def test_rows_per_cell(self):
        grid, lags = [-1.0, 1.0], [1, 2]
        truth = {(x, t): OracleResult(0.5, 0.0, 1, 0) for x in grid for t in lags}
        report = study_estimators(IID_T, 400, 0.9, lags, grid, reps=3, truth=truth, burn_in=0)
        assert len(report.rows) == 2 * len(grid) * len(lags)
        assert set(report.to_frame().columns) >= {"bias", "sd", "rmse", "rmse_ratio", "truth"}

    @pytest.mark.slow
    def test_garch_bias_and_rmse(self):
        grid = [-2.0, -1.0, 1.0, 2.0]
        report = study_estimators(GARCH_STUDY, 2000, 0.95, [1], grid, reps=300, seed=7)
        for row in report.rows:
            assert abs(row["bias"]) < 0.05
        assert report.cell(estimator="backward", x=2.0)["rmse_ratio"] < 1.0


class TestStudyCoverage:
    def test_small_run(self):
        truth = {(1.0, t): OracleResult(0.05, 0.0, 1, 0) for t in (1, 2)}
        schemes = [BootstrapScheme(SchemeKind.MULTIPLIER, 20, replicates=30),
                   BootstrapScheme(SchemeKind.STATIONARY, 20, replicates=30)]
        report = study_coverage(IID_T, 400, 0.9, [1, 2], 1.0, schemes, reps=4, truth=truth, burn_in=0)
        assert len(report.rows) == 4
        for row in report.rows:
            assert row["replicates"] + row["failed"] == 4
            assert np.isnan(row["coverage"]) or 0.0 <= row["coverage"] <= 1.0

    def test_rescaled_rows(self):
        truth = {(1.0, 1): OracleResult(0.05, 0.0, 1, 0)}
        schemes = [BootstrapScheme(SchemeKind.MULTIPLIER, 20, replicates=30)]
        report = study_coverage(IID_T, 600, 0.95, [1], 1.0, schemes, reps=2, rescale_from=0.9, truth=truth,
                                burn_in=0)
        assert [row["method"] for row in report.rows] == ["reflected", "rescaled"]

    def test_rescale_needs_lower_quantile(self):
        with pytest.raises(ValueError):
            study_coverage(IID_T, 400, 0.9, [1], 1.0, [BootstrapScheme(SchemeKind.MULTIPLIER, 20)], reps=1,
                           rescale_from=0.95, truth={(1.0, 1): OracleResult(0.05, 0.0, 1, 0)})

    @pytest.mark.slow
    def test_multiplier_coverage(self):
        schemes = [BootstrapScheme(SchemeKind.MULTIPLIER, 100, replicates=300),
                   BootstrapScheme(SchemeKind.STATIONARY, 100, replicates=300)]
        report = study_coverage(GARCH_STUDY, 2000, 0.95, [1, 2, 3, 4, 5], 1.0, schemes, reps=300, seed=11)
        for t in range(1, 6):
            multiplier = report.cell(scheme="multiplier", lag=t)["coverage"]
            stationary = report.cell(scheme="stationary", lag=t)["coverage"]
            assert 0.85 <= multiplier <= 0.99
            assert multiplier >= stationary - 0.02

    @pytest.mark.slow
    def test_rescaled_coverage_at_high_threshold(self):
        schemes = [BootstrapScheme(SchemeKind.MULTIPLIER, 100, replicates=300)]
        report = study_coverage(GARCH_STUDY, 2000, 0.98, [1, 2, 3, 4, 5], 1.0, schemes, reps=300,
                                rescale_from=0.95, seed=13)
        for t in range(1, 6):
            reflected = report.cell(method="reflected", lag=t)["coverage"]
            rescaled = report.cell(method="rescaled", lag=t)["coverage"]
            assert rescaled >= reflected - 0.02

    @pytest.mark.slow
    def test_short_blocks_undercover_at_long_lags(self):
        schemes = [BootstrapScheme(SchemeKind.MULTIPLIER, 5, replicates=300),
                   BootstrapScheme(SchemeKind.MULTIPLIER, 100, replicates=300)]
        report = study_coverage(GARCH_STUDY, 2000, 0.95, [5], 1.0, schemes, reps=300, seed=19)
        assert report.cell(block=5, lag=5)["coverage"] < report.cell(block=100, lag=5)["coverage"]


class TestIndependence:
    @pytest.fixture
    def iid_window(self):
        return SeriesWindow.from_raw(derive_rng(21).standard_t(3, size=50002), 1)

    @pytest.mark.slow
    def test_reference_matches_half_exceedance_rate(self, iid_window):
        u = resolve_threshold(iid_window, ThresholdSpec.quantile(0.95))
        reference = independence_reference(iid_window, u, 1, 1.0, mc_reps=200, seed=3)
        assert reference.analytic == pytest.approx(0.025, abs=1e-4)
        assert reference.mc_value == pytest.approx(0.025, abs=0.005)

    def test_zero_reps_returns_analytic(self, window):
        reference = independence_reference(window, 5, 1, 1.0, mc_reps=0)
        assert reference.mc_value is None
        assert reference.analytic == pytest.approx(3 / 7 / 2)

    def test_signed_conditioning_has_no_closed_form(self, window):
        with pytest.raises(ValueError):
            independence_reference(window, 5, 1, 1.0, Conditioning.POSITIVE, mc_reps=0)
        reference = independence_reference(window, 5, 1, 1.0, Conditioning.POSITIVE, mc_reps=50, seed=2)
        assert reference.analytic is None
        assert 0.0 <= reference.mc_value <= 1.0

    def test_quantile_level_one_is_maximum(self, iid_window):
        u = resolve_threshold(iid_window, ThresholdSpec.quantile(0.95))
        values = study._iid_estimates(iid_window, u, 1, 1.0, EstimatorKind.FORWARD, Conditioning.ABSOLUTE,
                                      Target.ABS_SURVIVAL, 30, 5)
        top = independence_quantile(iid_window, u, 1, 1.0, EstimatorKind.FORWARD, 1.0, mc_reps=30, seed=5)
        assert top == values.max()

    def test_median_near_analytic(self, iid_window):
        u = resolve_threshold(iid_window, ThresholdSpec.quantile(0.95))
        median = independence_quantile(iid_window, u, 1, 1.0, EstimatorKind.FORWARD, 0.5, mc_reps=50, seed=5)
        assert median == pytest.approx(0.025, abs=0.005)

    @pytest.mark.parametrize("level", [0.0, 1.5])
    def test_level_range(self, window, level):
        with pytest.raises(ValueError):
            independence_quantile(window, 5, 1, 1.0, EstimatorKind.FORWARD, level)
