import numpy as np
import pytest

from core import SeriesWindow, derive_rng
from errors import InvalidParams
from estimators import hill_alpha
from simulators import (
    GARCH_STUDY,
    MODEL_PRESETS,
    SV_STUDY,
    Innovation,
    ModelKind,
    ModelSpec,
    SimulationPlan,
    abs_moment,
    aparch_persistence,
    draw_innovations,
    initial_power_volatility,
    residuals,
    simulate,
    simulate_batch,
    simulate_paths,
    volatility_filter,
)


class TestModelSpec:
    def test_garch_needs_positive_omega(self):
        with pytest.raises(InvalidParams):
            ModelSpec.garch11(0.0, 0.14, 0.84).validate()

    def test_standardized_t_needs_finite_variance(self):
        with pytest.raises(InvalidParams):
            ModelSpec.iid(Innovation.STD_T, 2.0).validate()

    def test_sv_needs_stationary_phi(self):
        with pytest.raises(InvalidParams):
            ModelSpec.sv(1.0).validate()

    def test_aparch_gamma_range(self):
        with pytest.raises(InvalidParams):
            ModelSpec.aparch11(1e-5, 0.05, 0.9, 1.2, 1.0).validate()

    def test_nonstationary_garch_is_allowed(self, caplog):
        ModelSpec.garch11(0.1, 0.3, 0.8).validate()
        assert "not covariance stationary" in caplog.text

    def test_nonstationary_aparch_is_allowed(self, caplog):
        ModelSpec.aparch11(0.1, 0.3, 0.8, 2.0, 0.0).validate()
        assert "APARCH is not stationary" in caplog.text

    def test_presets_are_stationary(self, caplog):
        for name in ("sp500-aparch", "pg-aparch"):
            assert aparch_persistence(MODEL_PRESETS[name]) < 1
            MODEL_PRESETS[name].validate()
        assert "not stationary" not in caplog.text

    def test_config_round_trip(self):
        model = MODEL_PRESETS["sp500-aparch"]
        assert ModelSpec.from_config(model.to_config()) == model

    def test_config_needs_model(self):
        with pytest.raises(InvalidParams):
            ModelSpec.from_config({"OMEGA": "0.1"})


class TestInnovations:
    def test_normal_absolute_moment(self):
        assert abs_moment(ModelSpec.iid(Innovation.NORMAL, None), 2.0) == pytest.approx(1.0)

    def test_standardized_t_second_moment(self):
        assert abs_moment(ModelSpec.iid(Innovation.STD_T, 4.0), 2.0) == pytest.approx(1.0)

    def test_missing_moment(self):
        assert abs_moment(ModelSpec.iid(Innovation.RAW_T, 2.6), 3.0) == np.inf

    def test_aparch_persistence_quadratic(self):
        model = ModelSpec.aparch11(0.1, 0.14, 0.84, 2.0, 0.0, Innovation.STD_T, 4.0)
        assert aparch_persistence(model) == pytest.approx(0.98)

    def test_pareto_support(self):
        z = draw_innovations(derive_rng(1), ModelSpec.iid(Innovation.PARETO, 2.6), 10000)
        assert np.all(np.abs(z) >= 1.0)
        assert 0.45 < np.mean(z > 0) < 0.55


class TestSimulate:
    def test_deterministic(self):
        plan = SimulationPlan(GARCH_STUDY, 500, 100, seed=42)
        np.testing.assert_array_equal(simulate(plan), simulate(plan))

    def test_replicate_independent_of_batch(self):
        batch = simulate_batch(GARCH_STUDY, 300, 50, 7, [0, 1, 2])
        np.testing.assert_array_equal(batch[2], simulate_batch(GARCH_STUDY, 300, 50, 7, [2])[0])

    def test_distinct_seeds(self):
        a = simulate(SimulationPlan(GARCH_STUDY, 100, 10, seed=1))
        b = simulate(SimulationPlan(GARCH_STUDY, 100, 10, seed=2))
        assert not np.array_equal(a, b)

    def test_invalid_plan(self):
        with pytest.raises(ValueError):
            SimulationPlan(GARCH_STUDY, 0)

    def test_volatility_positive(self):
        for model in (GARCH_STUDY, SV_STUDY, MODEL_PRESETS["sp500-aparch"], MODEL_PRESETS["pg-aparch"]):
            paths = simulate_paths(model, 1000, 200, 3, [0, 1])
            assert np.all(paths.volatility > 0)
            np.testing.assert_allclose(paths.values, paths.volatility * paths.innovations)

    def test_aparch_reduces_to_garch(self):
        garch = ModelSpec.garch11(0.1, 0.14, 0.84, Innovation.STD_T, 4.0)
        aparch = ModelSpec.aparch11(0.1, 0.14, 0.84, 2.0, 0.0, Innovation.STD_T, 4.0)
        assert initial_power_volatility(aparch) == pytest.approx(0.1 / 0.16)
        assert initial_power_volatility(garch) == pytest.approx(5.0)
        # the two starting values are forgotten well within the burn-in
        np.testing.assert_allclose(simulate_batch(aparch, 2000, 2000, 5, [0]),
                                   simulate_batch(garch, 2000, 2000, 5, [0]), rtol=1e-9, atol=1e-12)

    @pytest.mark.slow
    def test_garch_unconditional_variance(self):
        x = simulate(SimulationPlan(GARCH_STUDY, 200000, 2000, seed=2024))
        assert np.var(x) == pytest.approx(5.0, rel=0.10)

    @pytest.mark.slow
    def test_iid_standardized_t_variance(self):
        x = simulate(SimulationPlan(ModelSpec.iid(Innovation.STD_T, 4.0), 200000, 0, seed=2024))
        assert np.var(x) == pytest.approx(1.0, rel=0.05)

    @pytest.mark.slow
    def test_sv_log_volatility_variance(self):
        paths = simulate_paths(SV_STUDY, 200000, 2000, 2024, [0])
        assert np.var(np.log(paths.volatility[0])) == pytest.approx(1 / (1 - 0.81), rel=0.10)

    @pytest.mark.slow
    def test_garch_tail_index(self):
        x = simulate(SimulationPlan(GARCH_STUDY, 200000, 2000, seed=2024))
        w = SeriesWindow.from_raw(x, 0)
        u = np.quantile(np.abs(x), 0.99)
        assert 2.0 <= hill_alpha(w, u).alpha <= 3.2


class TestResiduals:
    def test_recovers_innovations(self):
        paths = simulate_paths(GARCH_STUDY, 10000, 2000, 11, [0])
        z = residuals(paths.values[0], GARCH_STUDY)
        assert z.shape == paths.values[0].shape
        tail = slice(1000, None)
        assert np.corrcoef(z[tail], paths.innovations[0][tail])[0, 1] > 0.999

    def test_constant_volatility(self):
        c = 0.5
        model = ModelSpec.garch11(c**2, 0.0, 0.0, Innovation.NORMAL, None)
        x = derive_rng(4).standard_normal(50)
        np.testing.assert_allclose(residuals(x, model), x / c)

    def test_aparch_filter_matches_simulation(self):
        model = MODEL_PRESETS["sp500-aparch"]
        paths = simulate_paths(model, 3000, 0, 8, [0])
        np.testing.assert_allclose(volatility_filter(paths.values[0], model), paths.volatility[0], rtol=1e-8)

    def test_rejects_other_models(self):
        with pytest.raises(InvalidParams):
            residuals(np.ones(10), SV_STUDY)

    def test_rejects_nonpositive_omega(self):
        with pytest.raises(InvalidParams):
            residuals(np.ones(10), ModelSpec.garch11(-1.0, 0.1, 0.8))

    def test_model_kinds(self):
        assert {m.kind for m in MODEL_PRESETS.values()} == {ModelKind.GARCH11, ModelKind.APARCH11, ModelKind.SV}
