"""Forecast evaluation: sMAPE, RMSE, mean interval score, coverage, a
one-sided Welch t-test, and the Diebold-Mariano test on MAPE losses.

sMAPE is returned on the [0, 2] fraction scale; the report layer converts
to percent.  A term with both actual and forecast at zero counts as a
perfect hit (zero contribution).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import stats

from .errors import ContractError

__all__ = ["smape", "rmse", "mis", "coverage", "mape_series",
           "t_test_one_sided", "dm_test", "TestResult"]


class TestResult(NamedTuple):
    statistic: float
    p_value: float
    degenerate: bool = False


def _pair(actual, forecast) -> tuple[np.ndarray, np.ndarray]:
    actual = np.asarray(actual, dtype=np.float64)
    forecast = np.asarray(forecast, dtype=np.float64)
    if actual.shape != forecast.shape:
        raise ContractError(
            f"length mismatch: actual {actual.shape} vs forecast {forecast.shape}")
    return actual.ravel(), forecast.ravel()


def smape(actual, forecast) -> float:
    """Symmetric MAPE: (2/m) * sum |y - yhat| / (|y| + |yhat|)."""
    y, yhat = _pair(actual, forecast)
    num = np.abs(y - yhat)
    den = np.abs(y) + np.abs(yhat)
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0.0)
    return float(2.0 * terms.mean())


def rmse(actual, forecast) -> float:
    y, yhat = _pair(actual, forecast)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def mis(actual, lower, upper, alpha: float) -> float:
    """Mean interval score: width plus (2/alpha)-scaled exceedance penalties,
    averaged over steps."""
    y = np.asarray(actual, dtype=np.float64).ravel()
    lo = np.asarray(lower, dtype=np.float64).ravel()
    hi = np.asarray(upper, dtype=np.float64).ravel()
    if not (y.shape == lo.shape == hi.shape):
        raise ContractError("actual, lower and upper must have equal lengths")
    if np.any(lo > hi):
        raise ContractError("interval bounds must satisfy lower <= upper")
    if not 0.0 < alpha < 1.0:
        raise ContractError(f"alpha must lie in (0, 1), got {alpha}")
    scores = (hi - lo) \
        + (2.0 / alpha) * (lo - y) * (y < lo) \
        + (2.0 / alpha) * (y - hi) * (y > hi)
    return float(scores.mean())


def coverage(actual, lower, upper) -> float:
    """Fraction of observations inside the closed interval [lower, upper]."""
    y = np.asarray(actual, dtype=np.float64).ravel()
    lo = np.asarray(lower, dtype=np.float64).ravel()
    hi = np.asarray(upper, dtype=np.float64).ravel()
    if not (y.shape == lo.shape == hi.shape):
        raise ContractError("actual, lower and upper must have equal lengths")
    if np.any(lo > hi):
        raise ContractError("interval bounds must satisfy lower <= upper")
    return float(np.mean((y >= lo) & (y <= hi)))


def mape_series(actual, forecast) -> tuple[np.ndarray, int]:
    """Per-step |y - yhat| / |y| with zero-actual steps skipped.

    Returns the retained loss series and the number of skipped steps.
    """
    y, yhat = _pair(actual, forecast)
    keep = y != 0.0
    losses = np.abs(y[keep] - yhat[keep]) / np.abs(y[keep])
    return losses, int((~keep).sum())


def t_test_one_sided(sample_a, sample_b) -> TestResult:
    """Welch two-sample t-test of H1: mean(a) < mean(b).

    Uses Welch-Satterthwaite degrees of freedom; the p-value is the lower
    tail of the t distribution.  Two zero-variance samples with equal means
    come back as the degenerate no-difference result (statistic 0, p 0.5).
    """
    a = np.asarray(sample_a, dtype=np.float64).ravel()
    b = np.asarray(sample_b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise ContractError("each sample needs at least two observations")
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    diff = a.mean() - b.mean()
    if va == 0.0 and vb == 0.0:
        if diff == 0.0:
            return TestResult(0.0, 0.5, degenerate=True)
        stat = -np.inf if diff < 0 else np.inf
        return TestResult(float(stat), 0.0 if diff < 0 else 1.0, degenerate=True)
    se = np.sqrt(va / a.size + vb / b.size)
    stat = diff / se
    df = (va / a.size + vb / b.size) ** 2 / (
        (va / a.size) ** 2 / (a.size - 1) + (vb / b.size) ** 2 / (b.size - 1))
    p = float(stats.t.cdf(stat, df))
    return TestResult(float(stat), p)


def dm_test(actual, forecast_a, forecast_b) -> TestResult:
    """Diebold-Mariano test on MAPE loss differentials (one-step horizon).

    The statistic is dbar / sqrt(gamma0 / m), with gamma0 the lag-0
    autocovariance of the differentials; the p-value is two-sided under the
    normal approximation.  Identical losses give the degenerate
    no-difference result; constant nonzero differentials give an infinite
    statistic.
    """
    y = np.asarray(actual, dtype=np.float64).ravel()
    la, skip_a = mape_series(y, forecast_a)
    lb, skip_b = mape_series(y, forecast_b)
    if skip_a != skip_b:   # same actuals, so skips always agree
        raise ContractError("loss series misaligned")
    d = la - lb
    if d.size < 2:
        raise ContractError("need at least two usable loss differentials")
    dbar = d.mean()
    gamma0 = np.mean((d - dbar) ** 2)
    if gamma0 == 0.0:
        if dbar == 0.0:
            return TestResult(0.0, 1.0, degenerate=True)
        stat = -np.inf if dbar < 0 else np.inf
        return TestResult(float(stat), 0.0, degenerate=True)
    stat = dbar / np.sqrt(gamma0 / d.size)
    p = float(2.0 * stats.norm.sf(abs(stat)))
    return TestResult(float(stat), p)
