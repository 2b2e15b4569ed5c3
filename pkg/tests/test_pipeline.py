"""Pipeline behaviour: fitting, prediction mechanics, determinism,
serialization round-trips, and grid search."""

import datetime

import numpy as np
import pytest

from meslstm.errors import (ContractError, InsufficientDataError,
                            TrainingDivergenceError)
from meslstm.frame import SeriesFrame, SplitSpec, split
from meslstm.pipeline import (FittedModel, ModelConfig, expand_grid, fit,
                              full_search_grid, grid_search, load_model,
                              rolling_point_forecast, save_model)
from meslstm.smoothing import SeasonalityKind, SmoothingParams


def seasonal_frame(total=240, k=2, seed=0, noise=0.0, predictands=(0,)):
    """Constant level plus exact weekly pattern, optional white noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(total)
    patterns = rng.uniform(-5, 5, size=(k, 7))
    patterns -= patterns.mean(axis=1, keepdims=True)
    levels = rng.uniform(50, 150, size=k)
    values = levels[None, :] + patterns[:, t % 7].T
    if noise:
        values = values + rng.normal(0, noise, size=values.shape)
    return SeriesFrame(epoch=datetime.date(2020, 3, 1), offsets=t,
                       values=values,
                       columns=tuple(f"c{i}" for i in range(k)),
                       predictand_indices=predictands)


def tiny_config(**overrides):
    defaults = dict(lstm_size=8, epochs=3, batch_size=8, window=7,
                    n_mc=25, seed=0)
    defaults.update(overrides)
    return ModelConfig(**defaults)


class TestModelConfig:
    def test_rejects_zero_epochs(self):
        with pytest.raises(ContractError):
            ModelConfig(epochs=0)

    def test_rejects_bad_levels(self):
        with pytest.raises(ContractError):
            ModelConfig(significance_levels=(0.05, 1.5))

    def test_trainable_parameter_count(self):
        config = ModelConfig(lstm_size=50)
        expected_lstm = 4 * (50 * 10 + 50 * 50 + 50)
        expected = 2 * expected_lstm + (50 * 2 + 2) + 2 * (50 * 2 + 2)
        assert config.trainable_parameters(10, 2) == expected


class TestFit:
    def test_diagnostics_lengths(self):
        frame = seasonal_frame(noise=0.5)
        train, val, _ = split(frame, SplitSpec(), window=7)
        model = fit(train, val, tiny_config())
        assert len(model.diagnostics["train_loss"]) == 3
        assert len(model.diagnostics["validation_loss"]) == 3
        assert len(model.diagnostics["variational_train_loss"]) == 3

    def test_without_validation(self):
        frame = seasonal_frame(noise=0.5)
        train, _, _ = split(frame, SplitSpec(), window=7)
        model = fit(train, None, tiny_config())
        assert model.diagnostics["validation_loss"] == []
        assert model.state.step == train.n_steps

    def test_state_rolled_through_validation(self):
        frame = seasonal_frame(noise=0.5)
        train, val, _ = split(frame, SplitSpec(), window=7)
        model = fit(train, val, tiny_config())
        assert model.state.step == train.n_steps + val.n_steps
        np.testing.assert_array_equal(model.recent_values,
                                      val.values[-7:])

    def test_state_history_covers_fitted_rows(self):
        frame = seasonal_frame(noise=0.5)
        train, val, _ = split(frame, SplitSpec(), window=7)
        model = fit(train, val, tiny_config())
        assert len(model.state_history) == train.n_steps + val.n_steps
        steps = [s.step for s in model.state_history]
        assert steps == list(range(1, train.n_steps + val.n_steps + 1))

    def test_seasonality_override(self):
        frame = seasonal_frame(noise=0.5)
        train, val, _ = split(frame, SplitSpec(), window=7)
        model = fit(train, val, tiny_config(seasonality="additive"))
        assert all(k is SeasonalityKind.ADDITIVE for k in model.kinds)

    def test_training_too_short(self):
        frame = seasonal_frame(total=40)
        with pytest.raises(InsufficientDataError):
            fit(frame.slice_rows(0, 12), None, tiny_config())

    def test_divergence_is_reported_with_epoch(self):
        frame = seasonal_frame(noise=0.5)
        train, _, _ = split(frame, SplitSpec(), window=7)
        import warnings
        with warnings.catch_warnings():
            # the blown-up parameters overflow on purpose here
            warnings.simplefilter("ignore", RuntimeWarning)
            with pytest.raises(TrainingDivergenceError, match="epoch"):
                fit(train, None, tiny_config(learning_rate=1e18, epochs=2))

    def test_same_seed_identical_models(self):
        frame = seasonal_frame(noise=0.5)
        train, val, _ = split(frame, SplitSpec(), window=7)
        a = fit(train, val, tiny_config(seed=5))
        b = fit(train, val, tiny_config(seed=5))
        for key in a.point_net.lstm.params:
            np.testing.assert_array_equal(a.point_net.lstm.params[key],
                                          b.point_net.lstm.params[key])
        assert a.diagnostics == b.diagnostics

    def test_different_seeds_differ(self):
        frame = seasonal_frame(noise=0.5)
        train, val, _ = split(frame, SplitSpec(), window=7)
        a = fit(train, val, tiny_config(seed=1))
        b = fit(train, val, tiny_config(seed=2))
        assert not np.array_equal(a.point_net.head.params["w"],
                                  b.point_net.head.params["w"])


@pytest.fixture(scope="module")
def fitted():
    frame = seasonal_frame(noise=0.5, seed=3)
    train, val, test = split(frame, SplitSpec(), window=7)
    return fit(train, val, tiny_config()), test


class TestPredict:

    def test_forecast_shapes(self, fitted):
        model, _ = fitted
        result = model.predict()
        assert result.point.shape == (7, 1)
        assert set(result.intervals) == {0.05, 0.1, 0.2}
        assert result.distribution.samples.shape == (25, 7, 1)

    def test_intervals_ordered_and_nested(self, fitted):
        model, _ = fitted
        result = model.predict()
        lo5, hi5 = result.intervals[0.05]
        lo20, hi20 = result.intervals[0.2]
        assert np.all(lo5 <= hi5)
        assert np.all(lo5 <= lo20) and np.all(hi20 <= hi5)

    def test_predict_is_repeatable(self, fitted):
        model, _ = fitted
        a = model.predict()
        b = model.predict()
        np.testing.assert_array_equal(a.point, b.point)
        np.testing.assert_array_equal(a.distribution.samples,
                                      b.distribution.samples)

    def test_explicit_seed_controls_samples(self, fitted):
        model, _ = fitted
        a = model.predict(seed=1)
        b = model.predict(seed=2)
        np.testing.assert_array_equal(a.point, b.point)
        assert not np.array_equal(a.distribution.samples,
                                  b.distribution.samples)

    def test_context_must_match_tail(self, fitted):
        model, _ = fitted
        result = model.predict(context=model.recent_values)
        assert result.point.shape == (7, 1)
        with pytest.raises(ContractError):
            model.predict(context=model.recent_values + 1.0)
        with pytest.raises(ContractError):
            model.predict(context=model.recent_values[:-1])

    def test_degenerate_head_collapses_intervals(self, fitted):
        model, _ = fitted
        head = model.variational_net.head
        saved = {k: v.copy() for k, v in head.params.items()}
        try:
            head.params["rho_w"] = np.full_like(head.params["rho_w"], -40.0)
            head.params["rho_b"] = np.full_like(head.params["rho_b"], -40.0)
            result = model.predict()
            for lo, hi in result.intervals.values():
                np.testing.assert_allclose(lo, hi, atol=1e-9)
        finally:
            head.params.update(saved)

    def test_advance_moves_state(self, fitted):
        model, test = fitted
        advanced = model.advance(test.values[:7])
        assert advanced.state.step == model.state.step + 7
        np.testing.assert_array_equal(advanced.recent_values, test.values[:7])
        # original untouched
        assert model.state.step == 216

    def test_sample_count_contract(self, fitted):
        model, _ = fitted
        with pytest.raises(ContractError):
            model.sample_forecasts(n_mc=1)


class TestPipelineIdentity:
    def test_exact_seasonal_data_recovered(self):
        # zero-residual data: forecasts should match the actuals closely
        frame = seasonal_frame(total=300, k=2, seed=7, noise=0.0,
                               predictands=(0, 1))
        train, val, test = split(frame, SplitSpec(), window=7)
        model = fit(train, val, tiny_config(epochs=5))
        blocks = test.n_steps // 7
        forecast, _ = rolling_point_forecast(model, test)
        actual = test.predictand_values()[:blocks * 7]
        from meslstm.metrics import smape
        for c in range(2):
            assert smape(actual[:, c], forecast[:, c]) < 0.02


class TestVariationalTraining:
    def test_loss_decreases_on_ten_seeds(self):
        # MAE + KL-weighted penalty should end below its starting value
        frame = seasonal_frame(total=240, noise=1.0, seed=21)
        train, val, _ = split(frame, SplitSpec(), window=7)
        for seed in range(10):
            model = fit(train, val, tiny_config(epochs=4, seed=seed))
            losses = model.diagnostics["variational_train_loss"]
            assert losses[-1] < losses[0], f"seed {seed}: {losses}"


class TestSerialization:
    def test_round_trip_bitwise_predictions(self, tmp_path):
        frame = seasonal_frame(noise=0.5, seed=11)
        train, val, test = split(frame, SplitSpec(), window=7)
        model = fit(train, val, tiny_config())
        save_model(model, tmp_path / "model")
        restored = load_model(tmp_path / "model")
        a = model.predict()
        b = restored.predict()
        np.testing.assert_array_equal(a.point, b.point)
        np.testing.assert_array_equal(a.distribution.samples,
                                      b.distribution.samples)
        for alpha in a.intervals:
            np.testing.assert_array_equal(a.intervals[alpha][0],
                                          b.intervals[alpha][0])

    def test_restored_model_advances_identically(self, tmp_path):
        frame = seasonal_frame(noise=0.5, seed=12)
        train, val, test = split(frame, SplitSpec(), window=7)
        model = fit(train, val, tiny_config())
        save_model(model, tmp_path / "model")
        restored = load_model(tmp_path / "model")
        a = model.advance(test.values[:7]).predict()
        b = restored.advance(test.values[:7]).predict()
        np.testing.assert_array_equal(a.point, b.point)


class TestGridSearch:
    def test_single_candidate(self):
        frame = seasonal_frame(noise=0.5, seed=13)
        train, val, _ = split(frame, SplitSpec(), window=7)
        config = tiny_config()
        assert grid_search(train, val, [config]) == config

    def test_parsimony_breaks_ties(self):
        frame = seasonal_frame(noise=0.1, seed=14)
        train, val, _ = split(frame, SplitSpec(), window=7)
        small = tiny_config(lstm_size=4, epochs=2)
        large = tiny_config(lstm_size=16, epochs=2)
        best = grid_search(train, val, [large, small])
        assert best.lstm_size == 4

    def test_empty_grid(self):
        frame = seasonal_frame()
        train, val, _ = split(frame, SplitSpec(), window=7)
        with pytest.raises(ContractError):
            grid_search(train, val, [])

    def test_expand_grid_covers_product(self):
        base = tiny_config()
        grid = {"lstm_size": [4, 8], "epochs": [2, 3], "window": [7]}
        configs = expand_grid(base, grid)
        assert len(configs) == 4
        assert {c.lstm_size for c in configs} == {4, 8}

    def test_expand_grid_rejects_unknown_keys(self):
        with pytest.raises(ContractError):
            expand_grid(tiny_config(), {"dropout": [0.1]})

    def test_full_grid_matches_published_ranges(self):
        grid = full_search_grid()
        assert grid["lstm_size"][0] == 50 and grid["lstm_size"][-1] == 150
        assert grid["epochs"][0] == 15 and grid["epochs"][-1] == 75
        assert grid["batch_size"][0] == 8 and grid["batch_size"][-1] == 64
        assert grid["window"] == [7, 14, 21]
