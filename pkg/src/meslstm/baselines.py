"""Comparison models: multiple linear regression via ordinary least squares
and a seasonal-naive forecaster, plus the CSV contract for scoring
externally produced forecasts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .errors import ContractError, InsufficientDataError
from .frame import SeriesFrame

__all__ = ["OlsModel", "ols_fit", "ols_predict", "ols_extrapolate",
           "ols_intervals", "seasonal_naive", "external_forecast_columns",
           "read_external_forecasts"]

RIDGE_FALLBACK = 1e-8


@dataclass(frozen=True)
class OlsModel:
    """Per-predictand OLS coefficients over predictor columns + intercept."""

    coefficients: np.ndarray      # (n_predictors + 1, j); row 0 is the intercept
    residual_std: np.ndarray      # (j,)
    predictor_indices: tuple[int, ...]
    predictand_indices: tuple[int, ...]
    rank_deficient: bool = False

    def __post_init__(self):
        if not np.all(np.isfinite(self.coefficients)):
            raise ContractError("OLS coefficients must be finite")


def _design(values: np.ndarray, predictor_indices: tuple[int, ...]) -> np.ndarray:
    x = values[:, list(predictor_indices)]
    return np.hstack([np.ones((x.shape[0], 1)), x])


def ols_fit(train: SeriesFrame) -> OlsModel:
    """Least-squares fit of each predictand on the other covariates.

    Rank-deficient designs (constant columns are common in country slices)
    fall back to a tiny ridge penalty and set ``rank_deficient``.
    """
    predictors = tuple(i for i in range(train.n_covariates)
                       if i not in train.predictand_indices)
    design = _design(train.values, predictors)
    n, p = design.shape
    if n <= p:
        raise InsufficientDataError(
            f"need more than {p} rows to fit {p} coefficients, got {n}")
    targets = train.predictand_values()
    rank = np.linalg.matrix_rank(design)
    deficient = rank < p
    if deficient:
        gram = design.T @ design + RIDGE_FALLBACK * np.eye(p)
        coef = np.linalg.solve(gram, design.T @ targets)
    else:
        coef, *_ = np.linalg.lstsq(design, targets, rcond=None)
    residuals = targets - design @ coef
    residual_std = residuals.std(axis=0, ddof=0)
    return OlsModel(coefficients=coef, residual_std=residual_std,
                    predictor_indices=predictors,
                    predictand_indices=train.predictand_indices,
                    rank_deficient=deficient)


def ols_predict(model: OlsModel, frame: SeriesFrame) -> np.ndarray:
    """Predictand estimates from observed predictor rows, shape (T, j)."""
    if frame.predictand_indices != model.predictand_indices:
        raise ContractError("frame predictands do not match fitted model")
    design = _design(frame.values, model.predictor_indices)
    return design @ model.coefficients


def ols_extrapolate(model: OlsModel, covariate_row: np.ndarray,
                    horizon: int) -> np.ndarray:
    """Forecast a horizon from the covariates observed at its origin.

    Exogenous inputs are carried forward (no future covariate values are
    assumed known), so the forecast is flat at the origin's fitted value.
    Returns an (horizon, j) array.
    """
    covariate_row = np.asarray(covariate_row, dtype=np.float64)
    design = np.concatenate([[1.0],
                             covariate_row[list(model.predictor_indices)]])
    return np.tile(design @ model.coefficients, (horizon, 1))


def ols_intervals(model: OlsModel, predictions: np.ndarray,
                  alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian residual intervals: prediction +/- z_{1-alpha/2} * resid std."""
    if not 0.0 < alpha < 1.0:
        raise ContractError(f"alpha must lie in (0, 1), got {alpha}")
    predictions = np.asarray(predictions, dtype=np.float64)
    half = stats.norm.ppf(1.0 - alpha / 2.0) * model.residual_std
    return predictions - half, predictions + half


def seasonal_naive(tail: np.ndarray, period: int, horizon: int) -> np.ndarray:
    """Repeat the most recent full season over the horizon.

    The forecast at step h is the last observed value at the same phase:
    index T + h - period * ceil(h / period) of the history.
    """
    tail = np.asarray(tail, dtype=np.float64)
    if tail.ndim == 1:
        tail = tail[:, None]
    if period < 1 or horizon < 1:
        raise ContractError("period and horizon must be positive")
    if tail.shape[0] < period:
        raise InsufficientDataError(
            f"need at least {period} trailing rows, got {tail.shape[0]}")
    steps = np.arange(1, horizon + 1)
    idx = tail.shape[0] - 1 + steps - period * np.ceil(steps / period).astype(int)
    return tail[idx]


def external_forecast_columns(alphas: tuple[float, ...]) -> list[str]:
    """Header contract for externally supplied forecast CSVs."""
    cols = ["date", "predictand", "point"]
    for alpha in alphas:
        cols += [f"lower_{alpha:g}", f"upper_{alpha:g}"]
    return cols


def read_external_forecasts(path, alphas: tuple[float, ...]) -> pd.DataFrame:
    """Load a forecast CSV matching :func:`external_forecast_columns`.

    Returns a frame indexed by (date, predictand) with point and per-alpha
    bound columns; missing bound columns raise.
    """
    table = pd.read_csv(path)
    expected = external_forecast_columns(alphas)
    missing = [c for c in expected if c not in table.columns]
    if missing:
        raise ContractError(f"forecast CSV is missing columns: {missing}")
    table["date"] = pd.to_datetime(table["date"]).dt.date
    return table.set_index(["date", "predictand"]).sort_index()
