"""Variational dense head with flipout perturbations, its KL penalty against
a standard-normal prior, and percentile interval extraction from Monte-Carlo
forecast samples.

The layer keeps a Gaussian posterior per weight: mean ``mu`` and scale
``softplus(rho)``.  A stochastic pass shares one Gaussian perturbation
across the batch and decorrelates examples with per-example sign flips;
with the scales forced to zero it degenerates to a plain dense layer.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ContractError
from .neural import glorot_uniform

__all__ = ["FlipoutDense", "ForecastDistribution", "extract_interval",
           "percentile_pair", "kl_standard_normal"]

# softplus(rho) ~= 0.05 keeps the initial posterior tight
RHO_INIT = float(np.log(np.expm1(0.05)))


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


class FlipoutDense:
    """Dense layer whose weights and biases are Gaussian posteriors.

    A forward pass computes ``x @ mu_w.T`` plus a flipout perturbation
    ``((x * r) @ (sigma_w * E).T) * s`` with shared noise E and per-example
    sign vectors r, s, plus a sampled bias.
    """

    def __init__(self, input_size: int, output_size: int,
                 rng: np.random.Generator | None = None):
        self.input_size = input_size
        self.output_size = output_size
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = {
            "mu_w": glorot_uniform(rng, (output_size, input_size),
                                   input_size, output_size),
            "rho_w": np.full((output_size, input_size), RHO_INIT),
            "mu_b": np.zeros(output_size),
            "rho_b": np.full(output_size, RHO_INIT),
        }

    def sigma(self) -> tuple[np.ndarray, np.ndarray]:
        return _softplus(self.params["rho_w"]), _softplus(self.params["rho_b"])

    def forward(self, x: np.ndarray,
                rng: np.random.Generator) -> tuple[np.ndarray, dict]:
        """Stochastic pass; deterministic given the generator state."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_size:
            raise ContractError(
                f"expected (n, {self.input_size}) input, got shape {x.shape}")
        n = x.shape[0]
        sigma_w, sigma_b = self.sigma()
        noise = rng.standard_normal((self.output_size, self.input_size))
        r = rng.integers(0, 2, size=(n, self.input_size)) * 2.0 - 1.0
        s = rng.integers(0, 2, size=(n, self.output_size)) * 2.0 - 1.0
        eps_b = rng.standard_normal(self.output_size)
        perturbed = (x * r) @ (sigma_w * noise).T
        out = x @ self.params["mu_w"].T + perturbed * s \
            + self.params["mu_b"] + sigma_b * eps_b
        cache = {"x": x, "noise": noise, "r": r, "s": s, "eps_b": eps_b,
                 "sigma_w": sigma_w, "sigma_b": sigma_b}
        return out, cache

    def mean_forward(self, x: np.ndarray) -> np.ndarray:
        """Posterior-mean pass (equivalent to all scales at zero)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_size:
            raise ContractError(
                f"expected (n, {self.input_size}) input, got shape {x.shape}")
        return x @ self.params["mu_w"].T + self.params["mu_b"]

    def backward(self, cache: dict, dout: np.ndarray) -> tuple[dict, np.ndarray]:
        """Gradients through the stochastic pass with its noise held fixed."""
        dout = np.asarray(dout, dtype=np.float64)
        x, r, s = cache["x"], cache["r"], cache["s"]
        if dout.shape != (x.shape[0], self.output_size):
            raise ContractError("upstream gradient shape mismatch")
        ds_signed = dout * s
        dsigma_w = cache["noise"] * (ds_signed.T @ (x * r))
        dsigma_b = (dout.sum(axis=0)) * cache["eps_b"]
        # d softplus(rho) / d rho = sigmoid(rho)
        sig_w = expit(self.params["rho_w"])
        sig_b = expit(self.params["rho_b"])
        grads = {
            "mu_w": dout.T @ x,
            "rho_w": dsigma_w * sig_w,
            "mu_b": dout.sum(axis=0),
            "rho_b": dsigma_b * sig_b,
        }
        dx = dout @ self.params["mu_w"] \
            + (ds_signed @ (cache["sigma_w"] * cache["noise"])) * r
        return grads, dx

    def kl(self) -> float:
        """Closed-form KL of the weight/bias posteriors from N(0, 1)."""
        return sum(kl_standard_normal(self.params[mu_key],
                                      _softplus(self.params[rho_key]))
                   for mu_key, rho_key in (("mu_w", "rho_w"),
                                           ("mu_b", "rho_b")))

    def kl_grads(self) -> dict[str, np.ndarray]:
        grads = {}
        for mu_key, rho_key in (("mu_w", "rho_w"), ("mu_b", "rho_b")):
            mu = self.params[mu_key]
            rho = self.params[rho_key]
            sigma = _softplus(rho)
            dsigma = sigma - 1.0 / sigma
            grads[mu_key] = mu.copy()
            grads[rho_key] = dsigma * expit(rho)
        return grads


def kl_standard_normal(mu: np.ndarray, sigma: np.ndarray) -> float:
    """KL(N(mu, sigma^2) || N(0, 1)) summed over elements."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    return float(0.5 * np.sum(mu ** 2 + sigma ** 2 - 1.0 - 2.0 * np.log(sigma)))


def percentile_pair(alpha: float) -> tuple[float, float]:
    """Quantile levels bounding the (1 - alpha) central interval."""
    if not 0.0 < alpha < 1.0:
        raise ContractError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha / 2.0, (1.0 - alpha) + alpha / 2.0


@dataclass(frozen=True)
class ForecastDistribution:
    """Raw Monte-Carlo forecast samples: (n_samples, horizon, predictands)."""

    samples: np.ndarray
    predictand_names: tuple[str, ...] = ()

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 3:
            raise ContractError("samples must have shape (n, m, j)")
        if samples.shape[0] < 2:
            raise ContractError("at least two Monte-Carlo samples required")
        if not np.all(np.isfinite(samples)):
            raise ContractError("samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def horizon(self) -> int:
        return self.samples.shape[1]

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def to_csv(self, path) -> None:
        """Columns: predictand, step, sample_index, value."""
        names = self.predictand_names or tuple(
            f"predictand_{i}" for i in range(self.samples.shape[2]))
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["predictand", "step", "sample_index", "value"])
            for j, name in enumerate(names):
                for step in range(self.horizon):
                    for idx in range(self.n_samples):
                        writer.writerow(
                            [name, step + 1, idx,
                             repr(float(self.samples[idx, step, j]))])


def extract_interval(dist: ForecastDistribution,
                     alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Empirical central (1 - alpha) interval per predictand and step.

    Bounds are linearly interpolated order statistics of the stored samples,
    so lower <= upper always holds.  Both are (horizon, predictands) arrays.
    """
    lo_q, hi_q = percentile_pair(alpha)
    lower = np.quantile(dist.samples, lo_q, axis=0, method="linear")
    upper = np.quantile(dist.samples, hi_q, axis=0, method="linear")
    return lower, upper
