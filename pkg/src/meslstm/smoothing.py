"""Per-covariate exponential smoothing with additive or multiplicative
weekly seasonality, automatic kind selection by in-sample SSE, and the
de/re-seasonalization transforms used by the hybrid pipeline.

Each covariate carries a level, a trend, and a P-vector of seasonal indices.
After every update the additive indices are re-standardized to sum to zero
and the multiplicative indices to geometric mean one.  Inside the hybrid
pipeline the trend is frozen at its initial estimate (``update_trend=False``)
because the merge step supplies local trend itself; pure-smoothing
forecasting keeps the full trend recursion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import ContractError, DomainError, InsufficientDataError
from .frame import SeriesFrame

__all__ = [
    "SeasonalityKind", "SmoothingParams", "SmoothingState",
    "initialize", "fit_history", "roll_forward", "select_kind",
    "deseasonalize", "recompose", "deseasonalize_rows", "recompose_rows",
    "reseasonalize", "parameter_count",
    "state_to_dict", "state_from_dict", "state_to_json", "state_from_json",
]

STATE_FORMAT_VERSION = 1


class SeasonalityKind(str, Enum):
    ADDITIVE = "additive"
    MULTIPLICATIVE = "multiplicative"


@dataclass(frozen=True)
class SmoothingParams:
    """Smoothing constants (level, trend, seasonal) and season length."""

    alpha: float = 0.3
    gamma: float = 0.1
    delta: float = 0.1
    period: int = 7

    def __post_init__(self):
        for name, value in (("alpha", self.alpha), ("gamma", self.gamma),
                            ("delta", self.delta)):
            if not 0.0 <= value <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1], got {value}")
        if self.period < 2:
            raise ContractError(f"period must be at least 2, got {self.period}")


@dataclass(frozen=True)
class SmoothingState:
    """Level/trend/seasonal estimates for k covariates after ``step`` updates.

    ``seasonal[c, p]`` is the index for phase p of covariate c, where the
    phase of time index t is ``t % period`` counted from the start of the
    fitted frame.  The observation consumed by update number n has time
    index n - 1.
    """

    params: SmoothingParams
    kinds: tuple[SeasonalityKind, ...]
    level: np.ndarray      # (k,)
    trend: np.ndarray      # (k,)
    seasonal: np.ndarray   # (k, P)
    step: int = 0

    def __post_init__(self):
        level = np.asarray(self.level, dtype=np.float64)
        trend = np.asarray(self.trend, dtype=np.float64)
        seasonal = np.asarray(self.seasonal, dtype=np.float64)
        k = level.shape[0]
        if trend.shape != (k,) or seasonal.shape != (k, self.params.period):
            raise ContractError("state component shapes are inconsistent")
        if len(self.kinds) != k:
            raise ContractError("one seasonality kind per covariate required")
        for arr in (level, trend, seasonal):
            arr.setflags(write=False)
        object.__setattr__(self, "level", level)
        object.__setattr__(self, "trend", trend)
        object.__setattr__(self, "seasonal", seasonal)
        object.__setattr__(self, "kinds",
                           tuple(SeasonalityKind(k) for k in self.kinds))

    @property
    def n_covariates(self) -> int:
        return self.level.shape[0]

    def _masks(self) -> tuple[np.ndarray, np.ndarray]:
        add = np.array([k is SeasonalityKind.ADDITIVE for k in self.kinds])
        return add, ~add

    def update(self, y: np.ndarray, update_trend: bool = True) -> "SmoothingState":
        """Consume one observation vector and return the advanced state.

        Applies the level, (optionally) trend, and two-step seasonal updates
        for each covariate under its own seasonality kind, then
        re-standardizes the seasonal vectors.
        """
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.n_covariates,):
            raise ContractError(
                f"expected {self.n_covariates} values, got shape {y.shape}")
        add, mul = self._masks()
        if np.any(mul) and np.any(y[mul] <= 0.0):
            raise DomainError("multiplicative covariates require positive values")

        p = self.params
        phase = self.step % p.period
        s_cur = self.seasonal[:, phase]
        level, trend = self.level, self.trend

        new_level = np.empty_like(level)
        new_level[add] = (p.alpha * (y[add] - s_cur[add])
                          + (1.0 - p.alpha) * (level[add] + trend[add]))
        new_level[mul] = (p.alpha * (y[mul] / s_cur[mul])
                          + (1.0 - p.alpha) * (level[mul] * trend[mul]))

        if update_trend:
            new_trend = np.empty_like(trend)
            new_trend[add] = (p.gamma * (new_level[add] - level[add])
                              + (1.0 - p.gamma) * trend[add])
            new_trend[mul] = (p.gamma * (new_level[mul] / level[mul])
                              + (1.0 - p.gamma) * trend[mul])
        else:
            new_trend = trend.copy()

        # two-step seasonal update: raw refresh at the current phase, then
        # re-standardization of the whole vector
        seasonal = self.seasonal.copy()
        raw = np.empty_like(s_cur)
        raw[add] = p.delta * (y[add] - new_level[add]) + (1.0 - p.delta) * s_cur[add]
        raw[mul] = (p.delta * (y[mul] / (level[mul] * trend[mul]))
                    + (1.0 - p.delta) * s_cur[mul])
        seasonal[:, phase] = raw
        seasonal[add] -= seasonal[add].mean(axis=1, keepdims=True)
        if np.any(mul):
            geo = np.exp(np.log(seasonal[mul]).mean(axis=1, keepdims=True))
            seasonal[mul] /= geo

        return replace(self, level=new_level, trend=new_trend,
                       seasonal=seasonal, step=self.step + 1)

    def forecast(self, horizon: int) -> np.ndarray:
        """Pure-smoothing forecast for the next ``horizon`` steps, shape (m, k).

        Additive: level + h*trend + seasonal; multiplicative:
        level * trend**h * seasonal, with the seasonal index chosen
        cyclically for each future time step.
        """
        if horizon < 1:
            raise ContractError("horizon must be positive")
        add, mul = self._masks()
        p = self.params.period
        out = np.empty((horizon, self.n_covariates))
        for h in range(1, horizon + 1):
            phase = (self.step - 1 + h) % p
            s = self.seasonal[:, phase]
            row = out[h - 1]
            row[add] = self.level[add] + h * self.trend[add] + s[add]
            row[mul] = self.level[mul] * self.trend[mul] ** h * s[mul]
        return out

    def seasonal_for_horizon(self, horizon: int) -> np.ndarray:
        """Seasonal indices for the next ``horizon`` steps, shape (m, k)."""
        p = self.params.period
        phases = (self.step - 1 + np.arange(1, horizon + 1)) % p
        return self.seasonal[:, phases].T


def initialize(train: SeriesFrame | np.ndarray, params: SmoothingParams,
               kinds: SeasonalityKind | tuple[SeasonalityKind, ...]) -> SmoothingState:
    """Initial state from a training frame.

    Level is the in-sample mean.  Additive trend is the first-to-last
    difference divided by the number of increments; the multiplicative trend
    is the matching per-step growth ratio.  Seasonal indices are the first
    period's deviations from the level-plus-trend line (anchored at the
    sample mean), then standardized.
    """
    values = train.values if isinstance(train, SeriesFrame) else np.asarray(train, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    total, k = values.shape
    if isinstance(kinds, (SeasonalityKind, str)):
        kinds = (SeasonalityKind(kinds),) * k
    kinds = tuple(SeasonalityKind(kd) for kd in kinds)
    if len(kinds) != k:
        raise ContractError("one seasonality kind per covariate required")
    if total < 2 * params.period:
        raise InsufficientDataError(
            f"need at least {2 * params.period} rows to initialize "
            f"period-{params.period} seasonality, got {total}")
    add = np.array([kd is SeasonalityKind.ADDITIVE for kd in kinds])
    mul = ~add
    if np.any(mul) and np.any(values[:, mul] <= 0.0):
        raise DomainError("multiplicative covariates require positive values")

    level = values.mean(axis=0)
    trend = np.empty(k)
    trend[add] = (values[-1, add] - values[0, add]) / (total - 1)
    trend[mul] = (values[-1, mul] / values[0, mul]) ** (1.0 / (total - 1))

    # level-plus-trend fit through the sample mean, evaluated on the first period
    steps = np.arange(params.period) - (total - 1) / 2.0
    seasonal = np.empty((k, params.period))
    fit_add = level[add][:, None] + trend[add][:, None] * steps[None, :]
    seasonal[add] = values[:params.period, add].T - fit_add
    seasonal[add] -= seasonal[add].mean(axis=1, keepdims=True)
    if np.any(mul):
        fit_mul = level[mul][:, None] * trend[mul][:, None] ** steps[None, :]
        seasonal[mul] = values[:params.period, mul].T / fit_mul
        seasonal[mul] /= np.exp(np.log(seasonal[mul]).mean(axis=1, keepdims=True))

    return SmoothingState(params=params, kinds=tuple(kinds), level=level,
                          trend=trend, seasonal=seasonal, step=0)


def fit_history(train: SeriesFrame | np.ndarray, params: SmoothingParams,
                kinds: SeasonalityKind | tuple[SeasonalityKind, ...],
                update_trend: bool = True) -> list[SmoothingState]:
    """Initialize on the frame and roll updates through every row.

    Returns T+1 states: the initial state followed by one post-update
    snapshot per observation.
    """
    values = train.values if isinstance(train, SeriesFrame) else np.asarray(train, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    state = initialize(values, params, kinds)
    history = [state]
    for row in values:
        state = state.update(row, update_trend=update_trend)
        history.append(state)
    return history


def roll_forward(state: SmoothingState, values: np.ndarray,
                 update_trend: bool = False) -> list[SmoothingState]:
    """Advance an existing state through new observations.

    Returns one post-update snapshot per row (the input state excluded).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    history = []
    for row in values:
        state = state.update(row, update_trend=update_trend)
        history.append(state)
    return history


def select_kind(train: SeriesFrame | np.ndarray, params: SmoothingParams,
                update_trend: bool = False) -> tuple[SeasonalityKind, ...]:
    """Pick the seasonality kind per covariate by one-step-ahead SSE.

    Both kinds are fitted over the training frame and the kind with the
    lower accumulated squared one-step error wins; ties go to additive.
    Covariates with non-positive values skip the multiplicative candidate.
    """
    values = train.values if isinstance(train, SeriesFrame) else np.asarray(train, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    k = values.shape[1]
    positive = np.all(values > 0.0, axis=0)

    def sse_for(kind: SeasonalityKind, cols: np.ndarray) -> np.ndarray:
        sub = values[:, cols]
        state = initialize(sub, params, kind)
        total = np.zeros(sub.shape[1])
        for row in sub:
            pred = state.forecast(1)[0]
            total += (row - pred) ** 2
            state = state.update(row, update_trend=update_trend)
        return total

    all_cols = np.arange(k)
    sse_add = sse_for(SeasonalityKind.ADDITIVE, all_cols)
    kinds = [SeasonalityKind.ADDITIVE] * k
    if np.any(positive):
        pos_cols = all_cols[positive]
        sse_mul = sse_for(SeasonalityKind.MULTIPLICATIVE, pos_cols)
        for col, sse in zip(pos_cols, sse_mul):
            if sse < sse_add[col]:
                kinds[col] = SeasonalityKind.MULTIPLICATIVE
    return tuple(kinds)


def deseasonalize_rows(values: np.ndarray,
                       states: list[SmoothingState]) -> np.ndarray:
    """Array-level deseasonalization given one post-update state per row."""
    values = np.asarray(values, dtype=np.float64)
    states = _aligned_states(states, values.shape[0])
    out = np.empty_like(values)
    for t, state in enumerate(states):
        level, seasonal, add = _components_at(state)
        row = values[t]
        res = np.empty_like(row)
        res[add] = row[add] - level[add] - seasonal[add]
        denom = level[~add] * seasonal[~add]
        if np.any(denom == 0.0):
            raise DomainError("level*seasonal is zero; cannot deseasonalize "
                              "multiplicative covariate")
        res[~add] = row[~add] / denom
        out[t] = res
    return out


def recompose_rows(values: np.ndarray,
                   states: list[SmoothingState]) -> np.ndarray:
    """Exact inverse of :func:`deseasonalize_rows` with the same states."""
    values = np.asarray(values, dtype=np.float64)
    states = _aligned_states(states, values.shape[0])
    out = np.empty_like(values)
    for t, state in enumerate(states):
        level, seasonal, add = _components_at(state)
        row = values[t]
        res = np.empty_like(row)
        res[add] = row[add] + level[add] + seasonal[add]
        res[~add] = row[~add] * level[~add] * seasonal[~add]
        out[t] = res
    return out


def deseasonalize(frame: SeriesFrame, history: list[SmoothingState]) -> SeriesFrame:
    """Strip level and seasonality from every covariate.

    ``history`` must hold one post-update state per frame row (an optional
    leading pre-update state is ignored).  Additive covariates become
    y - level - seasonal; multiplicative become y / (level * seasonal),
    each using the state aligned with its own time step.
    """
    return replace(frame, values=deseasonalize_rows(frame.values, history))


def recompose(frame: SeriesFrame, history: list[SmoothingState]) -> SeriesFrame:
    """Exact inverse of :func:`deseasonalize` with the same state history."""
    return replace(frame, values=recompose_rows(frame.values, history))


def _aligned_states(history: list[SmoothingState], rows: int) -> list[SmoothingState]:
    if len(history) == rows + 1:
        return history[1:]
    if len(history) == rows:
        return history
    raise ContractError(
        f"state history length {len(history)} does not cover {rows} rows")


def _components_at(state: SmoothingState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # state.step - 1 is the time index of the observation this state absorbed
    phase = (state.step - 1) % state.params.period
    add = np.array([k is SeasonalityKind.ADDITIVE for k in state.kinds])
    return state.level, state.seasonal[:, phase], add


def reseasonalize(raw: np.ndarray, state: SmoothingState,
                  predictand_indices: tuple[int, ...]) -> np.ndarray:
    """Merge neural output back onto the smoothing components.

    ``raw`` has shape (m, j) with rows ordered by horizon step.  Additive
    predictands produce level + h * raw + seasonal at horizon offset h
    (the offset product supplies local trend); multiplicative produce
    raw * level * seasonal.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise ContractError("raw must be an (m, j) matrix")
    horizon, j = raw.shape
    if j != len(predictand_indices):
        raise ContractError("raw columns must match predictand count")
    cols = list(predictand_indices)
    seasonal = state.seasonal_for_horizon(horizon)[:, cols]
    level = state.level[cols]
    add = np.array([state.kinds[c] is SeasonalityKind.ADDITIVE for c in cols])
    offsets = np.arange(1, horizon + 1, dtype=np.float64)[:, None]
    out = np.empty_like(raw)
    out[:, add] = level[add] + offsets * raw[:, add] + seasonal[:, add]
    out[:, ~add] = raw[:, ~add] * level[~add] * seasonal[:, ~add]
    return out


def parameter_count(k: int, period: int) -> int:
    """Number of stored smoothing parameters: (k + 1) * (2 + P)."""
    if k < 1:
        raise ContractError("need at least one covariate")
    if period < 2:
        raise ContractError("period must be at least 2")
    return (k + 1) * (2 + period)


def state_to_dict(state: SmoothingState, columns: tuple[str, ...]) -> dict:
    """JSON-ready layout: covariate name -> components, plus shared params."""
    if len(columns) != state.n_covariates:
        raise ContractError("one column name per covariate required")
    return {
        "version": STATE_FORMAT_VERSION,
        "step": state.step,
        "params": {"alpha": state.params.alpha, "gamma": state.params.gamma,
                   "delta": state.params.delta, "period": state.params.period},
        "covariates": {
            name: {
                "level": float(state.level[i]),
                "trend": float(state.trend[i]),
                "seasonal": [float(v) for v in state.seasonal[i]],
                "kind": state.kinds[i].value,
            }
            for i, name in enumerate(columns)
        },
    }


def state_from_dict(payload: dict, columns: tuple[str, ...]) -> SmoothingState:
    if payload.get("version") != STATE_FORMAT_VERSION:
        raise ContractError(f"unsupported state format version "
                            f"{payload.get('version')!r}")
    params = SmoothingParams(**payload["params"])
    covs = payload["covariates"]
    missing = [c for c in columns if c not in covs]
    if missing:
        raise ContractError(f"state is missing covariates: {missing}")
    level = np.array([covs[c]["level"] for c in columns])
    trend = np.array([covs[c]["trend"] for c in columns])
    seasonal = np.array([covs[c]["seasonal"] for c in columns])
    kinds = tuple(SeasonalityKind(covs[c]["kind"]) for c in columns)
    return SmoothingState(params=params, kinds=kinds, level=level,
                          trend=trend, seasonal=seasonal,
                          step=int(payload["step"]))


def state_to_json(state: SmoothingState, columns: tuple[str, ...]) -> str:
    return json.dumps(state_to_dict(state, columns), indent=2, sort_keys=True)


def state_from_json(text: str, columns: tuple[str, ...]) -> SmoothingState:
    return state_from_dict(json.loads(text), columns)
