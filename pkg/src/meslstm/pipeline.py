"""End-to-end hybrid forecaster: smoothing pass, deseasonalization, window
building, training of the point and variational networks, rolling
prediction with Monte-Carlo intervals, and grid-search tuning.

Two parallel networks share nothing: an LSTM + dense head produces point
forecasts, and an LSTM + flipout head produces the forecast distribution.
Inside the pipeline the smoothing trend is frozen at its initial estimate;
the merge step's horizon-offset product supplies local trend instead.
"""

from __future__ import annotations

import itertools
import json
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import smoothing
from .errors import (ContractError, InsufficientDataError,
                     TrainingDivergenceError)
from .frame import SeriesFrame, WindowBatch, make_windows
from .metrics import smape
from .neural import Adam, DenseLayer, LstmLayer, mae_loss
from .smoothing import (SeasonalityKind, SmoothingParams, SmoothingState,
                        reseasonalize)
from .variational import FlipoutDense, ForecastDistribution, extract_interval

__all__ = ["ModelConfig", "FittedModel", "ForecastResult", "fit",
           "grid_search", "full_search_grid", "expand_grid",
           "config_to_dict", "config_from_dict", "save_model", "load_model"]

MODEL_FORMAT_VERSION = 1

# floor for the per-covariate RMS scales that condition the networks
_SCALE_FLOOR = 1e-8

# The variational head's output unit for additive predictands is floored at
# this fraction of the raw series RMS.  The weight prior is dimensionless,
# and additive deseasonalized targets are mean-zero residuals whose RMS
# badly underestimates the scale the merged forecast samples must span;
# multiplicative targets already carry the level, so they keep the plain
# residual scale.
VAR_SCALE_FRACTION = 0.1


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters for one hybrid model."""

    lstm_size: int = 50
    epochs: int = 25
    batch_size: int = 16
    window: int = 14
    smoothing: SmoothingParams = field(default_factory=SmoothingParams)
    seasonality: str = "auto"        # auto | additive | multiplicative
    n_mc: int = 200
    significance_levels: tuple[float, ...] = (0.05, 0.1, 0.2)
    seed: int = 0
    learning_rate: float = 0.001
    grad_clip: float | None = None
    head_activation: str = "relu"

    def __post_init__(self):
        for name, value in (("lstm_size", self.lstm_size),
                            ("epochs", self.epochs),
                            ("batch_size", self.batch_size),
                            ("window", self.window),
                            ("n_mc", self.n_mc)):
            if value < 1:
                raise ContractError(f"{name} must be positive, got {value}")
        if self.seasonality not in ("auto", "additive", "multiplicative"):
            raise ContractError(f"unknown seasonality {self.seasonality!r}")
        if self.learning_rate <= 0:
            raise ContractError("learning_rate must be positive")
        for alpha in self.significance_levels:
            if not 0.0 < alpha < 1.0:
                raise ContractError(f"significance level {alpha} outside (0, 1)")
        object.__setattr__(self, "significance_levels",
                           tuple(self.significance_levels))

    def trainable_parameters(self, n_covariates: int, n_predictands: int) -> int:
        """Total trainable weights across both networks."""
        k, s, j = n_covariates, self.lstm_size, n_predictands
        lstm = 4 * (s * k + s * s + s)
        dense = s * j + j
        flipout = 2 * (s * j + j)
        return 2 * lstm + dense + flipout


@dataclass(frozen=True)
class ForecastResult:
    """Point forecast with per-level interval bounds and the raw samples.

    ``point`` and each bound are (horizon, predictands) arrays ordered by
    horizon step.
    """

    point: np.ndarray
    intervals: dict[float, tuple[np.ndarray, np.ndarray]]
    distribution: ForecastDistribution
    predictand_names: tuple[str, ...]


class _Network:
    """LSTM core plus head, with RMS input/output scaling."""

    def __init__(self, lstm: LstmLayer, head, input_scale: np.ndarray,
                 output_scale: np.ndarray):
        self.lstm = lstm
        self.head = head
        self.input_scale = input_scale
        self.output_scale = output_scale

    def deterministic(self, window: np.ndarray) -> np.ndarray:
        """Point (or posterior-mean) output for a single (m, k) window."""
        h, _ = self.lstm.forward(window[None] / self.input_scale)
        flat = h.reshape(-1, h.shape[2])
        if isinstance(self.head, FlipoutDense):
            out = self.head.mean_forward(flat)
        else:
            out, _ = self.head.forward(flat)
        return out.reshape(h.shape[1], -1) * self.output_scale

    def hidden(self, window: np.ndarray) -> np.ndarray:
        h, _ = self.lstm.forward(window[None] / self.input_scale)
        return h[0]

    def sample_head(self, hidden: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
        out, _ = self.head.forward(hidden, rng)
        return out * self.output_scale


def _component_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed,
                               spawn_key=(zlib.crc32(name.encode()),)))


def _clip_gradients(grads: dict[str, np.ndarray], threshold: float) -> None:
    norm = np.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))
    if norm > threshold:
        factor = threshold / norm
        for g in grads.values():
            g *= factor


def _target_raw(targets: np.ndarray, kinds_additive: np.ndarray) -> np.ndarray:
    """Convert deseasonalized target blocks to head-output units.

    The additive merge multiplies the head output by the horizon offset, so
    additive targets are divided by their offset; multiplicative targets are
    consumed as-is.
    """
    horizon = targets.shape[-2]
    offsets = np.arange(1, horizon + 1, dtype=np.float64)[:, None]
    return np.where(kinds_additive, targets / offsets, targets)


def _train_network(network: _Network, windows: WindowBatch,
                   val_windows: WindowBatch | None, config: ModelConfig,
                   seed_prefix: str, target_kinds_additive: np.ndarray,
                   kl_weight: float = 0.0
                   ) -> tuple[list[float], list[float]]:
    """Train one network in place; returns per-epoch train and val losses."""
    variational = isinstance(network.head, FlipoutDense)
    inputs = windows.inputs / network.input_scale
    targets = _target_raw(windows.targets, target_kinds_additive) \
        / network.output_scale
    if val_windows is not None:
        val_inputs = val_windows.inputs / network.input_scale
        val_targets = _target_raw(val_windows.targets,
                                  target_kinds_additive) \
            / network.output_scale

    shuffle_rng = _component_rng(config.seed, f"{seed_prefix}-shuffle")
    noise_rng = _component_rng(config.seed, f"{seed_prefix}-noise")
    opt_lstm = Adam(learning_rate=config.learning_rate)
    opt_head = Adam(learning_rate=config.learning_rate)

    n = inputs.shape[0]
    train_losses: list[float] = []
    val_losses: list[float] = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            x = inputs[batch]
            t = targets[batch]
            h, lstm_cache = network.lstm.forward(x)
            flat = h.reshape(-1, h.shape[2])
            if variational:
                out_flat, head_cache = network.head.forward(flat, noise_rng)
            else:
                out_flat, head_cache = network.head.forward(flat)
            pred = out_flat.reshape(t.shape)
            loss, dpred = mae_loss(pred, t)
            head_grads, dflat = network.head.backward(
                head_cache, dpred.reshape(out_flat.shape))
            if variational and kl_weight > 0.0:
                loss += kl_weight * network.head.kl()
                for key, grad in network.head.kl_grads().items():
                    head_grads[key] += kl_weight * grad
            lstm_grads, _ = network.lstm.backward(
                lstm_cache, dflat.reshape(h.shape))
            if config.grad_clip is not None:
                _clip_gradients(lstm_grads, config.grad_clip)
                _clip_gradients(head_grads, config.grad_clip)
            opt_lstm.step(network.lstm.params, lstm_grads)
            opt_head.step(network.head.params, head_grads)
            epoch_loss += loss * len(batch)
        epoch_loss /= n
        if not np.isfinite(epoch_loss):
            raise TrainingDivergenceError(epoch=epoch, loss=epoch_loss)
        train_losses.append(epoch_loss)
        if val_windows is not None:
            h, _ = network.lstm.forward(val_inputs)
            flat = h.reshape(-1, h.shape[2])
            if variational:
                out_flat = network.head.mean_forward(flat)
            else:
                out_flat, _ = network.head.forward(flat)
            val_loss, _ = mae_loss(out_flat.reshape(val_targets.shape),
                                   val_targets)
            val_losses.append(val_loss)
    return train_losses, val_losses


@dataclass(frozen=True)
class FittedModel:
    """A trained hybrid model plus the smoothing states it needs to forecast
    the next window.

    ``state_history`` holds one post-update smoothing snapshot per consumed
    row (training, validation, and anything rolled in later), so any window
    of the fitted span can be inverted exactly; ``recent_values`` holds the
    last ``window`` observed rows.  ``advance`` rolls new observations in,
    ``predict`` forecasts the next ``window`` steps.  Restored models carry
    only the forecasting-sufficient suffix of the history.
    """

    config: ModelConfig
    columns: tuple[str, ...]
    predictand_indices: tuple[int, ...]
    kinds: tuple[SeasonalityKind, ...]
    state_history: tuple[SmoothingState, ...]
    recent_values: np.ndarray                     # (m, k)
    point_net: _Network
    variational_net: _Network
    diagnostics: dict[str, list[float]]

    @property
    def state(self) -> SmoothingState:
        """Current (most recent) smoothing snapshot."""
        return self.state_history[-1]

    @property
    def recent_states(self) -> tuple[SmoothingState, ...]:
        return self.state_history[-self.config.window:]

    @property
    def predictand_names(self) -> tuple[str, ...]:
        return tuple(self.columns[i] for i in self.predictand_indices)

    def _check_context(self, context) -> None:
        if isinstance(context, SeriesFrame):
            if context.columns != self.columns or \
                    context.predictand_indices != self.predictand_indices:
                raise ContractError("context schema does not match the "
                                    "training schema")
            values = context.values
        else:
            values = np.asarray(context, dtype=np.float64)
        if values.shape != self.recent_values.shape:
            raise ContractError(
                f"context must hold the final {self.config.window} consumed "
                f"rows, got shape {values.shape}")
        if not np.allclose(values, self.recent_values, rtol=1e-12, atol=1e-12):
            raise ContractError("context values do not match the rows this "
                                "model was fitted through")

    def advance(self, observations) -> "FittedModel":
        """Roll the smoothing state through newly observed rows.

        Returns a new model sharing the trained networks; the networks are
        never retrained here.
        """
        values = observations.values if isinstance(observations, SeriesFrame) \
            else np.asarray(observations, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.columns):
            raise ContractError("observations must be (rows, covariates)")
        states = smoothing.roll_forward(self.state, values, update_trend=False)
        all_values = np.vstack([self.recent_values, values])
        m = self.config.window
        return replace(self, state_history=self.state_history + tuple(states),
                       recent_values=all_values[-m:])

    def _deseasonalized_context(self) -> np.ndarray:
        return smoothing.deseasonalize_rows(self.recent_values,
                                            list(self.recent_states))

    def point_forecast(self) -> np.ndarray:
        """Deterministic-head forecast for the next window, shape (m, j)."""
        raw = self.point_net.deterministic(self._deseasonalized_context())
        return reseasonalize(raw, self.state, self.predictand_indices)

    def sample_forecasts(self, n_mc: int | None = None,
                         seed: int | None = None) -> ForecastDistribution:
        """Monte-Carlo forecast distribution from the variational head.

        The LSTM pass is deterministic; only the head is stochastic.  Every
        sample is merged back onto the smoothing components before storage.
        """
        n_mc = self.config.n_mc if n_mc is None else n_mc
        if n_mc < 2:
            raise ContractError("need at least two Monte-Carlo samples")
        rng = self._mc_rng(seed)
        hidden = self.variational_net.hidden(self._deseasonalized_context())
        samples = np.empty((n_mc, self.config.window,
                            len(self.predictand_indices)))
        for i in range(n_mc):
            raw = self.variational_net.sample_head(hidden, rng)
            samples[i] = reseasonalize(raw, self.state,
                                       self.predictand_indices)
        return ForecastDistribution(samples=samples,
                                    predictand_names=self.predictand_names)

    def _mc_rng(self, seed: int | None) -> np.random.Generator:
        if seed is None:
            # stable per forecast origin so reruns match
            return _component_rng(self.config.seed, f"mc-{self.state.step}")
        return np.random.default_rng(seed)

    def predict(self, context=None, seed: int | None = None) -> ForecastResult:
        """Forecast the next ``window`` steps from the current state.

        ``context``, when given, must equal the final consumed rows (a
        schema and value check); it exists so callers can assert what the
        forecast is conditioned on.
        """
        if context is not None:
            self._check_context(context)
        point = self.point_forecast()
        dist = self.sample_forecasts(seed=seed)
        intervals = {alpha: extract_interval(dist, alpha)
                     for alpha in self.config.significance_levels}
        return ForecastResult(point=point, intervals=intervals,
                              distribution=dist,
                              predictand_names=self.predictand_names)


def _resolve_kinds(train: SeriesFrame,
                   config: ModelConfig) -> tuple[SeasonalityKind, ...]:
    if config.seasonality == "auto":
        return smoothing.select_kind(train, config.smoothing,
                                     update_trend=False)
    kind = SeasonalityKind(config.seasonality)
    return (kind,) * train.n_covariates


def fit(train: SeriesFrame, validation: SeriesFrame | None,
        config: ModelConfig) -> FittedModel:
    """Fit the hybrid model.

    Runs seasonality-kind selection (unless overridden), initializes and
    rolls the smoothing state over the training frame, deseasonalizes,
    builds rolling windows, and trains both networks.  When a validation
    frame is given its rows are rolled into the final state and per-epoch
    validation losses are recorded.
    """
    m = config.window
    if train.n_steps < 2 * m:
        raise InsufficientDataError(
            f"training frame has {train.n_steps} rows; needs {2 * m}")
    kinds = _resolve_kinds(train, config)
    history = smoothing.fit_history(train.values, config.smoothing, kinds,
                                    update_trend=False)
    deseason_train = smoothing.deseasonalize(train, history)
    windows = make_windows(deseason_train, m, stride=1)

    val_windows = None
    val_states: list[SmoothingState] = []
    if validation is not None:
        if validation.n_steps < 2 * m:
            raise InsufficientDataError(
                f"validation frame has {validation.n_steps} rows; "
                f"needs {2 * m} for loss tracking")
        val_states = smoothing.roll_forward(history[-1], validation.values,
                                            update_trend=False)
        deseason_val = smoothing.deseasonalize(validation, val_states)
        val_windows = make_windows(deseason_val, m, stride=1)

    k = train.n_covariates
    j = len(train.predictand_indices)
    pred_cols = list(train.predictand_indices)
    input_scale = np.maximum(
        np.sqrt(np.mean(deseason_train.values ** 2, axis=0)), _SCALE_FLOOR)
    output_scale = input_scale[pred_cols]
    level_scale = np.sqrt(np.mean(train.values[:, pred_cols] ** 2, axis=0))
    additive = np.array([kinds[c] is SeasonalityKind.ADDITIVE
                         for c in pred_cols])
    var_output_scale = np.where(
        additive, np.maximum(output_scale, VAR_SCALE_FRACTION * level_scale),
        output_scale)

    point_net = _Network(
        LstmLayer(k, config.lstm_size, _component_rng(config.seed, "point-init")),
        DenseLayer(config.lstm_size, j, activation=config.head_activation,
                   rng=_component_rng(config.seed, "point-head-init")),
        input_scale, output_scale)
    var_net = _Network(
        LstmLayer(k, config.lstm_size, _component_rng(config.seed, "var-init")),
        FlipoutDense(config.lstm_size, j,
                     rng=_component_rng(config.seed, "var-head-init")),
        input_scale, var_output_scale)

    train_losses, val_losses = _train_network(
        point_net, windows, val_windows, config, "point", additive)
    var_losses, var_val_losses = _train_network(
        var_net, windows, val_windows, config, "var", additive,
        kl_weight=1.0 / len(windows))

    full_values = train.values if validation is None \
        else np.vstack([train.values, validation.values])
    full_states = history[1:] + val_states
    diagnostics = {"train_loss": train_losses,
                   "validation_loss": val_losses,
                   "variational_train_loss": var_losses,
                   "variational_validation_loss": var_val_losses}
    return FittedModel(config=config, columns=train.columns,
                       predictand_indices=train.predictand_indices,
                       kinds=kinds, state_history=tuple(full_states),
                       recent_values=full_values[-m:].copy(),
                       point_net=point_net, variational_net=var_net,
                       diagnostics=diagnostics)


def rolling_point_forecast(model: FittedModel,
                           future: SeriesFrame) -> tuple[np.ndarray, FittedModel]:
    """Point-forecast successive non-overlapping windows of ``future``.

    After each window is forecast, its observed rows are rolled into the
    state.  Returns the concatenated (n_blocks * m, j) forecasts and the
    advanced model.
    """
    m = model.config.window
    blocks = future.n_steps // m
    if blocks < 1:
        raise InsufficientDataError(
            f"future frame has {future.n_steps} rows; needs {m}")
    parts = []
    for b in range(blocks):
        parts.append(model.point_forecast())
        model = model.advance(future.values[b * m:(b + 1) * m])
    return np.vstack(parts), model


def full_search_grid() -> dict[str, list]:
    """The complete tuning grid for the deep-learning layer."""
    return {
        "lstm_size": list(range(50, 155, 5)),
        "epochs": list(range(15, 80, 5)),
        "batch_size": list(range(8, 72, 8)),
        "window": [7, 14, 21],
    }


def expand_grid(base: ModelConfig, grid: dict[str, list]) -> list[ModelConfig]:
    """All configurations reachable from ``base`` through ``grid``."""
    unknown = set(grid) - {"lstm_size", "epochs", "batch_size", "window"}
    if unknown:
        raise ContractError(f"grid keys not tunable: {sorted(unknown)}")
    keys = sorted(grid)
    configs = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        configs.append(replace(base, **dict(zip(keys, combo))))
    return configs


def grid_search(train: SeriesFrame, validation: SeriesFrame,
                candidates: list[ModelConfig]) -> ModelConfig:
    """Pick the most parsimonious of the five most accurate configurations.

    Every candidate is fitted on the training frame alone and scored by
    validation sMAPE averaged over predictands (rolling non-overlapping
    windows).  Among the five lowest scores the configuration with the
    fewest trainable parameters wins; ties break toward smaller LSTM size,
    then fewer epochs.
    """
    if not candidates:
        raise ContractError("candidate grid is empty")
    k = train.n_covariates
    j = len(train.predictand_indices)
    actual = validation.predictand_values()
    scored = []
    for index, config in enumerate(candidates):
        model = fit(train, None, config)
        blocks = validation.n_steps // config.window
        if blocks < 1:
            raise InsufficientDataError(
                f"validation frame too short for window {config.window}")
        forecast, _ = rolling_point_forecast(model, validation)
        horizon = forecast.shape[0]
        score = float(np.mean([smape(actual[:horizon, c], forecast[:, c])
                               for c in range(j)]))
        scored.append((score, index, config))
    scored.sort(key=lambda item: (item[0], item[1]))
    top = scored[:5]
    top.sort(key=lambda item: (item[2].trainable_parameters(k, j),
                               item[2].lstm_size, item[2].epochs, item[1]))
    return top[0][2]


def config_to_dict(config: ModelConfig) -> dict:
    return {
        "lstm_size": config.lstm_size, "epochs": config.epochs,
        "batch_size": config.batch_size, "window": config.window,
        "smoothing": {"alpha": config.smoothing.alpha,
                      "gamma": config.smoothing.gamma,
                      "delta": config.smoothing.delta,
                      "period": config.smoothing.period},
        "seasonality": config.seasonality, "n_mc": config.n_mc,
        "significance_levels": list(config.significance_levels),
        "seed": config.seed, "learning_rate": config.learning_rate,
        "grad_clip": config.grad_clip,
        "head_activation": config.head_activation,
    }


def config_from_dict(payload: dict) -> ModelConfig:
    payload = dict(payload)
    smoothing_params = SmoothingParams(**payload.pop("smoothing", {}))
    payload["significance_levels"] = tuple(
        payload.get("significance_levels", (0.05, 0.1, 0.2)))
    return ModelConfig(smoothing=smoothing_params, **payload)


def save_model(model: FittedModel, directory) -> None:
    """Persist a fitted model as a directory of JSON files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": MODEL_FORMAT_VERSION,
        "columns": list(model.columns),
        "predictand_indices": list(model.predictand_indices),
        "config": config_to_dict(model.config),
        "diagnostics": model.diagnostics,
    }
    (directory / "model.json").write_text(json.dumps(meta, indent=2))
    smoothing_payload = {
        "state": smoothing.state_to_dict(model.state, model.columns),
        "recent_values": model.recent_values.tolist(),
        "recent_states": [smoothing.state_to_dict(s, model.columns)
                          for s in model.recent_states],
    }
    (directory / "smoothing.json").write_text(
        json.dumps(smoothing_payload, indent=2))
    def tensors(layer):
        return {k: {"shape": list(v.shape), "values": v.tolist()}
                for k, v in layer.params.items()}

    networks = {
        "version": MODEL_FORMAT_VERSION,
        "input_scale": model.point_net.input_scale.tolist(),
        "output_scale": model.point_net.output_scale.tolist(),
        "var_output_scale": model.variational_net.output_scale.tolist(),
        "point_lstm": tensors(model.point_net.lstm),
        "point_head": tensors(model.point_net.head),
        "var_lstm": tensors(model.variational_net.lstm),
        "var_head": tensors(model.variational_net.head),
    }
    (directory / "networks.json").write_text(json.dumps(networks))


def load_model(directory) -> FittedModel:
    directory = Path(directory)
    meta = json.loads((directory / "model.json").read_text())
    if meta.get("version") != MODEL_FORMAT_VERSION:
        raise ContractError(
            f"unsupported model format version {meta.get('version')!r}")
    config = config_from_dict(meta["config"])
    columns = tuple(meta["columns"])
    predictand_indices = tuple(meta["predictand_indices"])

    smoothing_payload = json.loads((directory / "smoothing.json").read_text())
    recent_states = tuple(smoothing.state_from_dict(s, columns)
                          for s in smoothing_payload["recent_states"])
    recent_values = np.array(smoothing_payload["recent_values"])

    networks = json.loads((directory / "networks.json").read_text())
    k, j = len(columns), len(predictand_indices)
    input_scale = np.array(networks["input_scale"])
    output_scale = np.array(networks["output_scale"])
    var_output_scale = np.array(networks["var_output_scale"])

    def restore(layer, payload):
        for key, entry in payload.items():
            tensor = np.array(entry["values"], dtype=np.float64)
            if list(tensor.shape) != entry["shape"]:
                raise ContractError(f"stored tensor {key!r} shape mismatch")
            layer.params[key] = tensor
        return layer

    point_net = _Network(
        restore(LstmLayer(k, config.lstm_size), networks["point_lstm"]),
        restore(DenseLayer(config.lstm_size, j,
                           activation=config.head_activation),
                networks["point_head"]),
        input_scale, output_scale)
    var_net = _Network(
        restore(LstmLayer(k, config.lstm_size), networks["var_lstm"]),
        restore(FlipoutDense(config.lstm_size, j), networks["var_head"]),
        input_scale, var_output_scale)

    return FittedModel(config=config, columns=columns,
                       predictand_indices=predictand_indices,
                       kinds=recent_states[-1].kinds,
                       state_history=recent_states,
                       recent_values=recent_values,
                       point_net=point_net, variational_net=var_net,
                       diagnostics=meta["diagnostics"])
