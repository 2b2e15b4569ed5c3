"""Flipout layer behaviour, KL arithmetic, gradient agreement with fixed
noise, and interval extraction mechanics.
"""

import numpy as np
import pytest

from meslstm.errors import ContractError
from meslstm.neural import mae_loss
from meslstm.variational import (FlipoutDense, ForecastDistribution,
                                 extract_interval, percentile_pair)

from oracles import assert_gradients_close, finite_difference


def degenerate(layer):
    """Force the posterior scales to (numerically) zero."""
    layer.params["rho_w"] = np.full_like(layer.params["rho_w"], -40.0)
    layer.params["rho_b"] = np.full_like(layer.params["rho_b"], -40.0)
    return layer


class TestFlipoutForward:
    def test_zero_scale_equals_dense_mean(self):
        layer = degenerate(FlipoutDense(3, 2, rng=np.random.default_rng(0)))
        x = np.random.default_rng(1).normal(size=(5, 3))
        out, _ = layer.forward(x, np.random.default_rng(2))
        np.testing.assert_allclose(out, layer.mean_forward(x), atol=1e-12)

    def test_fixed_seed_is_deterministic(self):
        layer = FlipoutDense(3, 2, rng=np.random.default_rng(0))
        x = np.random.default_rng(1).normal(size=(5, 3))
        a, _ = layer.forward(x, np.random.default_rng(42))
        b, _ = layer.forward(x, np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)

    def test_unit_posterior_sampling_statistics(self):
        # 1x1 layer, mu=0 sigma=1, input 1: outputs should be ~N(0, 1)
        layer = FlipoutDense(1, 1)
        layer.params["mu_w"] = np.zeros((1, 1))
        layer.params["rho_w"] = np.full((1, 1),
                                        float(np.log(np.expm1(1.0))))
        layer.params["mu_b"] = np.zeros(1)
        layer.params["rho_b"] = np.full(1, -40.0)   # silence the bias
        rng = np.random.default_rng(3)
        draws = np.array([layer.forward(np.ones((1, 1)), rng)[0][0, 0]
                          for _ in range(10_000)])
        assert abs(draws.mean()) < 0.05
        assert abs(draws.std() - 1.0) < 0.05

    def test_shape_mismatch(self):
        layer = FlipoutDense(3, 2)
        with pytest.raises(ContractError):
            layer.forward(np.zeros((4, 7)), np.random.default_rng(0))


class TestFlipoutGradients:
    def test_finite_difference_agreement_with_fixed_noise(self):
        for seed in range(5):
            data_rng = np.random.default_rng(200 + seed)
            layer = FlipoutDense(4, 2, rng=np.random.default_rng(300 + seed))
            x = data_rng.normal(size=(6, 4))
            target = data_rng.normal(size=(6, 2)) + 3.0
            noise_seed = 400 + seed

            def loss_value():
                out, _ = layer.forward(x, np.random.default_rng(noise_seed))
                return mae_loss(out, target)[0]

            out, cache = layer.forward(x, np.random.default_rng(noise_seed))
            _, dout = mae_loss(out, target)
            grads, dx = layer.backward(cache, dout)
            for key, grad in grads.items():
                numeric = finite_difference(loss_value, layer.params[key])
                assert_gradients_close(grad, numeric)
            assert_gradients_close(dx, finite_difference(loss_value, x))

    def test_kl_gradients_match_finite_differences(self):
        layer = FlipoutDense(3, 2, rng=np.random.default_rng(9))
        analytic = layer.kl_grads()
        for key in ("mu_w", "rho_w", "mu_b", "rho_b"):
            numeric = finite_difference(layer.kl, layer.params[key])
            assert_gradients_close(analytic[key], numeric)


class TestKl:
    def test_standard_posterior_is_zero(self):
        layer = FlipoutDense(1, 1)
        layer.params["mu_w"] = np.zeros((1, 1))
        layer.params["rho_w"] = np.full((1, 1), float(np.log(np.expm1(1.0))))
        layer.params["mu_b"] = np.zeros(1)
        layer.params["rho_b"] = np.full(1, float(np.log(np.expm1(1.0))))
        assert layer.kl() == pytest.approx(0.0, abs=1e-12)

    def test_unit_mean_worked_example(self):
        # KL(N(1,1) || N(0,1)) = 0.5 for the single weight
        layer = FlipoutDense(1, 1)
        layer.params["mu_w"] = np.ones((1, 1))
        layer.params["rho_w"] = np.full((1, 1), float(np.log(np.expm1(1.0))))
        layer.params["mu_b"] = np.zeros(1)
        layer.params["rho_b"] = np.full(1, float(np.log(np.expm1(1.0))))
        assert layer.kl() == pytest.approx(0.5)

    def test_nonnegative_on_random_posteriors(self):
        rng = np.random.default_rng(17)
        layer = FlipoutDense(5, 4)
        for _ in range(1000):
            layer.params["mu_w"] = rng.normal(size=(4, 5))
            layer.params["rho_w"] = rng.normal(size=(4, 5)) * 2.0
            layer.params["mu_b"] = rng.normal(size=4)
            layer.params["rho_b"] = rng.normal(size=4) * 2.0
            assert layer.kl() >= -1e-12


class TestPercentiles:
    def test_level_pairs(self):
        assert percentile_pair(0.05) == (pytest.approx(0.025),
                                         pytest.approx(0.975))
        assert percentile_pair(0.1) == (pytest.approx(0.05),
                                        pytest.approx(0.95))
        assert percentile_pair(0.2) == (pytest.approx(0.1),
                                        pytest.approx(0.9))

    def test_alpha_domain(self):
        with pytest.raises(ContractError):
            percentile_pair(0.0)
        with pytest.raises(ContractError):
            percentile_pair(1.0)


class TestForecastDistribution:
    def test_requires_two_samples(self):
        with pytest.raises(ContractError):
            ForecastDistribution(samples=np.zeros((1, 3, 2)))

    def test_interpolated_quantiles_worked_example(self):
        samples = np.arange(1.0, 101.0).reshape(100, 1, 1)
        dist = ForecastDistribution(samples=samples)
        lower, upper = extract_interval(dist, 0.2)
        assert lower[0, 0] == pytest.approx(10.9)
        assert upper[0, 0] == pytest.approx(90.1)

    def test_bounds_ordered_and_nested(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            samples = rng.normal(loc=rng.normal(0, 5),
                                 scale=rng.uniform(0.1, 3),
                                 size=(50, 4, 2))
            dist = ForecastDistribution(samples=samples)
            narrow_lo, narrow_hi = extract_interval(dist, 0.2)
            wide_lo, wide_hi = extract_interval(dist, 0.05)
            assert np.all(narrow_lo <= narrow_hi)
            assert np.all(wide_lo <= narrow_lo + 1e-12)
            assert np.all(narrow_hi <= wide_hi + 1e-12)

    def test_csv_export_layout(self, tmp_path):
        samples = np.arange(12.0).reshape(2, 3, 2)
        dist = ForecastDistribution(samples=samples,
                                    predictand_names=("a", "b"))
        path = tmp_path / "dist.csv"
        dist.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "predictand,step,sample_index,value"
        assert len(lines) == 1 + 2 * 3 * 2
        assert lines[1].startswith("a,1,0,")
