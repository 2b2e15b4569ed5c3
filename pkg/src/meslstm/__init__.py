"""Hybrid multivariate forecaster: an exponential-smoothing preprocessing
layer fused with a small LSTM and a variational output head, producing
point forecasts and Monte-Carlo prediction intervals, with the baselines,
metrics, and significance tests needed to evaluate it.
"""

from .frame import SeriesFrame, SplitSpec, WindowBatch, make_windows, split
from .smoothing import (SeasonalityKind, SmoothingParams, SmoothingState,
                        parameter_count)
from .pipeline import (FittedModel, ForecastResult, ModelConfig, fit,
                       grid_search, load_model, save_model)
from .variational import ForecastDistribution, extract_interval
from .metrics import coverage, dm_test, mis, rmse, smape, t_test_one_sided
from .experiment import ExperimentReport, ExperimentSpec, run_experiment

__version__ = "0.1.0"

__all__ = [
    "SeriesFrame", "SplitSpec", "WindowBatch", "make_windows", "split",
    "SeasonalityKind", "SmoothingParams", "SmoothingState", "parameter_count",
    "FittedModel", "ForecastResult", "ModelConfig", "fit", "grid_search",
    "load_model", "save_model",
    "ForecastDistribution", "extract_interval",
    "coverage", "dm_test", "mis", "rmse", "smape", "t_test_one_sided",
    "ExperimentReport", "ExperimentSpec", "run_experiment",
    "__version__",
]
