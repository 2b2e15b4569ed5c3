"""Independent naive re-implementations used as test oracles.

Everything here is written with plain per-covariate Python loops and stays
deliberately separate from the library code paths it checks.
"""

import math

import numpy as np


def finite_difference(func, array, step=1e-5):
    """Central-difference gradient of a scalar function w.r.t. an array.

    ``func`` must re-evaluate the full computation from the current array
    contents; the array is perturbed in place and restored.
    """
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        up = func()
        flat[i] = original - step
        down = func()
        flat[i] = original
        grad.reshape(-1)[i] = (up - down) / (2.0 * step)
    return grad


def assert_gradients_close(analytic, numeric, rel_tol=1e-4, abs_slack=1e-7):
    """Elementwise |a - n| <= rel_tol * max(|a|, |n|) + abs_slack."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    gap = np.abs(analytic - numeric)
    bad = gap > rel_tol * scale + abs_slack
    assert not np.any(bad), (
        f"{bad.sum()} gradient entries disagree; worst gap "
        f"{gap[bad].max() if bad.any() else 0.0}")


def naive_initialize(series, period, multiplicative):
    """Level/trend/seasonal initialization for one covariate."""
    total = len(series)
    level = sum(series) / total
    if multiplicative:
        trend = (series[-1] / series[0]) ** (1.0 / (total - 1))
    else:
        trend = (series[-1] - series[0]) / (total - 1)
    seasonal = []
    for i in range(period):
        offset = i - (total - 1) / 2.0
        if multiplicative:
            seasonal.append(series[i] / (level * trend ** offset))
        else:
            seasonal.append(series[i] - (level + trend * offset))
    return level, trend, _standardize(seasonal, multiplicative)


def _standardize(seasonal, multiplicative):
    if multiplicative:
        log_mean = sum(math.log(s) for s in seasonal) / len(seasonal)
        geo = math.exp(log_mean)
        return [s / geo for s in seasonal]
    mean = sum(seasonal) / len(seasonal)
    return [s - mean for s in seasonal]


def naive_step(y, level, trend, seasonal, phase, alpha, gamma, delta,
               multiplicative, update_trend=True):
    """One recursion step for one covariate; returns the new components."""
    s_cur = seasonal[phase]
    if multiplicative:
        new_level = alpha * (y / s_cur) + (1.0 - alpha) * level * trend
        if update_trend:
            new_trend = gamma * (new_level / level) + (1.0 - gamma) * trend
        else:
            new_trend = trend
        raw = delta * y / (level * trend) + (1.0 - delta) * s_cur
    else:
        new_level = alpha * (y - s_cur) + (1.0 - alpha) * (level + trend)
        if update_trend:
            new_trend = gamma * (new_level - level) + (1.0 - gamma) * trend
        else:
            new_trend = trend
        raw = delta * (y - new_level) + (1.0 - delta) * s_cur
    updated = list(seasonal)
    updated[phase] = raw
    return new_level, new_trend, _standardize(updated, multiplicative)


def naive_run(series, period, alpha, gamma, delta, multiplicative,
              update_trend=True):
    """Initialization plus the full recursion over one covariate.

    Returns per-step (level, trend, seasonal) trajectories, the initial
    state included as entry 0.
    """
    level, trend, seasonal = naive_initialize(series, period, multiplicative)
    levels, trends, seasonals = [level], [trend], [list(seasonal)]
    for t, y in enumerate(series):
        level, trend, seasonal = naive_step(
            y, level, trend, seasonal, t % period, alpha, gamma, delta,
            multiplicative, update_trend)
        levels.append(level)
        trends.append(trend)
        seasonals.append(list(seasonal))
    return levels, trends, seasonals


def naive_forecast(level, trend, seasonal, step, period, horizon,
                   multiplicative):
    """Out-of-sample forecasts for one covariate after ``step`` updates."""
    out = []
    for h in range(1, horizon + 1):
        phase = (step - 1 + h) % period
        if multiplicative:
            out.append(level * trend ** h * seasonal[phase])
        else:
            out.append(level + h * trend + seasonal[phase])
    return out
