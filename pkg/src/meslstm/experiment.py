"""Repeated-trial evaluation harness: fits the hybrid model and the enabled
baselines per country, scores point forecasts and intervals on the test
partition, and writes the per-trial, aggregate, and significance-test
tables as CSV files.

Scoring walks the test partition in non-overlapping windows: each model
forecasts a window, then the observed rows roll into its state before the
next one.  sMAPE and coverage are reported in percent; every random stream
derives from (root seed + trial index), so reruns are bit-identical.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import baselines as bl
from . import metrics as mt
from .errors import ContractError, InsufficientDataError
from .frame import SeriesFrame, SplitSpec, split
from .ingest import DEFAULT_FEATURES, DEFAULT_PREDICTANDS, IngestSpec, load
from .pipeline import FittedModel, ModelConfig, fit

__all__ = ["ExperimentSpec", "ExperimentReport", "run_experiment",
           "evaluate_forecast_table", "HYBRID_LABEL", "MLR_LABEL",
           "NAIVE_LABEL"]

HYBRID_LABEL = "MES-LSTM"
MLR_LABEL = "MLR"
NAIVE_LABEL = "Seasonal-Naive"

METRICS_COLUMNS = ["country", "model", "predictand", "trial",
                   "smape_pct", "rmse"]
INTERVALS_COLUMNS = ["country", "model", "predictand", "alpha", "trial",
                     "mis", "coverage_pct"]
TESTS_COLUMNS = ["country", "predictand", "metric", "alpha", "baseline",
                 "test", "direction", "statistic", "p_value", "degenerate"]


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one evaluation run needs."""

    data_path: str
    countries: tuple[str, ...]
    config: ModelConfig = field(default_factory=ModelConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    trials: int = 35
    root_seed: int = 0
    baselines: tuple[str, ...] = ("mlr", "seasonal_naive")
    features: tuple[str, ...] = DEFAULT_FEATURES
    predictands: tuple[str, ...] = DEFAULT_PREDICTANDS
    fill_policy: str = "default"
    output_dir: str = "out"
    jobs: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trial count must be at least 1")
        object.__setattr__(self, "countries", tuple(self.countries))
        object.__setattr__(self, "baselines", tuple(self.baselines))
        unknown = set(self.baselines) - {"mlr", "seasonal_naive"}
        if unknown:
            raise ValueError(f"unknown baselines: {sorted(unknown)}")


@dataclass
class ExperimentReport:
    """Per-trial and aggregated tables, plus any per-country failures."""

    metrics: pd.DataFrame
    intervals: pd.DataFrame
    tests: pd.DataFrame
    forecasts: pd.DataFrame
    errors: dict[str, str] = field(default_factory=dict)

    def write(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.metrics.to_csv(directory / "metrics.csv", index=False)
        self.intervals.to_csv(directory / "intervals.csv", index=False)
        self.tests.to_csv(directory / "tests.csv", index=False)
        self.forecasts.to_csv(directory / "forecasts.csv", index=False)
        if self.errors:
            (directory / "errors.json").write_text(
                json.dumps(self.errors, indent=2, sort_keys=True))


@dataclass
class _CountryScores:
    """Raw per-country scoring material before table assembly."""

    country: str
    predictands: tuple[str, ...]
    dates: list
    actual: np.ndarray                                  # (n, j)
    points: dict[str, list[np.ndarray]]                 # model -> per-trial (n, j)
    bounds: dict[str, list[dict[float, tuple]]]         # model -> per-trial {alpha: (lo, hi)}
    hybrid_trial_ids: list[int] = field(default_factory=list)
    trial_errors: dict[int, str] = field(default_factory=dict)

    def trial_runs(self, model: str, n_trials: int):
        """(trial index, points, bounds) triplets for one model.

        Deterministic baselines repeat their single evaluation across all
        trial indices; the hybrid yields only its successful trials.
        """
        if model == HYBRID_LABEL:
            return list(zip(self.hybrid_trial_ids, self.points[model],
                            self.bounds[model]))
        return [(t, self.points[model][0], self.bounds[model][0])
                for t in range(n_trials)]


def _hybrid_rolling(model: FittedModel, test: SeriesFrame,
                    blocks: int) -> tuple[np.ndarray, dict[float, tuple]]:
    """Forecast non-overlapping test windows, advancing through observations."""
    m = model.config.window
    alphas = model.config.significance_levels
    points, lows, highs = [], {a: [] for a in alphas}, {a: [] for a in alphas}
    for b in range(blocks):
        result = model.predict()
        points.append(result.point)
        for alpha in alphas:
            lo, hi = result.intervals[alpha]
            lows[alpha].append(lo)
            highs[alpha].append(hi)
        model = model.advance(test.values[b * m:(b + 1) * m])
    bounds = {a: (np.vstack(lows[a]), np.vstack(highs[a])) for a in alphas}
    return np.vstack(points), bounds


def _naive_rolling(history: np.ndarray, scored: np.ndarray, period: int,
                   window: int, blocks: int) -> np.ndarray:
    """Seasonal-naive forecasts for each window, folding in observed rows."""
    parts = []
    for b in range(blocks):
        parts.append(bl.seasonal_naive(history, period, window))
        history = np.vstack([history, scored[b * window:(b + 1) * window]])
    return np.vstack(parts)


def _score_country(spec: ExperimentSpec, country: str,
                   frame: SeriesFrame) -> _CountryScores:
    config = spec.config
    m = config.window
    train, validation, test = split(frame, spec.split, window=m)
    blocks = test.n_steps // m
    if blocks < 1:
        raise InsufficientDataError(
            f"test partition for {country!r} is shorter than one window")
    scored = test.slice_rows(0, blocks * m)
    actual = scored.predictand_values()
    alphas = config.significance_levels

    result = _CountryScores(
        country=country, predictands=frame.predictand_names,
        dates=[scored.date_at(i) for i in range(scored.n_steps)],
        actual=actual, points={}, bounds={})

    hybrid_points, hybrid_bounds = [], []
    for trial in range(spec.trials):
        cfg = replace(config, seed=spec.root_seed + trial)
        try:
            model = fit(train, validation, cfg)
            pts, bds = _hybrid_rolling(model, scored, blocks)
        except Exception as exc:   # isolate the trial, keep the run going
            result.trial_errors[trial] = f"{type(exc).__name__}: {exc}"
            continue
        hybrid_points.append(pts)
        hybrid_bounds.append(bds)
        result.hybrid_trial_ids.append(trial)
    if not hybrid_points:
        raise RuntimeError(
            f"all {spec.trials} trials failed for {country!r}: "
            f"{result.trial_errors}")
    result.points[HYBRID_LABEL] = hybrid_points
    result.bounds[HYBRID_LABEL] = hybrid_bounds

    fit_rows = train.n_steps + validation.n_steps
    fit_frame = frame.slice_rows(0, fit_rows)
    if "mlr" in spec.baselines:
        ols = bl.ols_fit(fit_frame)
        # like every model, MLR sees data only up to each forecast origin
        history = fit_frame.values
        parts = []
        for b in range(blocks):
            parts.append(bl.ols_extrapolate(ols, history[-1], m))
            history = np.vstack([history, scored.values[b * m:(b + 1) * m]])
        pts = np.vstack(parts)
        bds = {a: bl.ols_intervals(ols, pts, a) for a in alphas}
        result.points[MLR_LABEL] = [pts]
        result.bounds[MLR_LABEL] = [bds]
    if "seasonal_naive" in spec.baselines:
        history = fit_frame.predictand_values()
        pts = _naive_rolling(history, actual, config.smoothing.period,
                             m, blocks)
        result.points[NAIVE_LABEL] = [pts]
        result.bounds[NAIVE_LABEL] = [{}]
    return result


def _population_std(values: np.ndarray) -> float:
    # identical trial outcomes (deterministic models) must report exactly 0
    if np.ptp(values) == 0.0:
        return 0.0
    return float(np.std(values))


def _aggregate_rows(rows: list[dict], keys: list[str],
                    value_columns: list[str]) -> list[dict]:
    """Mean/std rows (population std) grouped by everything but the trial."""
    table = pd.DataFrame(rows)
    out = []
    for group_key, group in table.groupby(keys, sort=False):
        base = dict(zip(keys, group_key if isinstance(group_key, tuple)
                        else (group_key,)))
        for stat, func in (("mean", np.mean), ("std", _population_std)):
            row = dict(base)
            row["trial"] = stat
            for col in value_columns:
                row[col] = float(func(group[col].to_numpy()))
            out.append(row)
    return out


def _assemble_tables(spec: ExperimentSpec,
                     scores: list[_CountryScores]) -> ExperimentReport:
    alphas = spec.config.significance_levels
    metric_rows: list[dict] = []
    interval_rows: list[dict] = []
    test_rows: list[dict] = []
    forecast_rows: list[dict] = []

    for cs in scores:
        j = len(cs.predictands)
        per_trial: dict[tuple, list[float]] = {}

        for model in cs.points:
            for trial, pts, bds in cs.trial_runs(model, spec.trials):
                for c in range(j):
                    name = cs.predictands[c]
                    sm = mt.smape(cs.actual[:, c], pts[:, c]) * 100.0
                    rm = mt.rmse(cs.actual[:, c], pts[:, c])
                    metric_rows.append({
                        "country": cs.country, "model": model,
                        "predictand": name, "trial": trial,
                        "smape_pct": sm, "rmse": rm})
                    per_trial.setdefault((model, name, "smape_pct", None),
                                         []).append(sm)
                    per_trial.setdefault((model, name, "rmse", None),
                                         []).append(rm)
                    for alpha in alphas:
                        if alpha not in bds:
                            continue
                        lo, hi = bds[alpha]
                        mis_val = mt.mis(cs.actual[:, c], lo[:, c], hi[:, c],
                                         alpha)
                        cov = mt.coverage(cs.actual[:, c], lo[:, c],
                                          hi[:, c]) * 100.0
                        interval_rows.append({
                            "country": cs.country, "model": model,
                            "predictand": name, "alpha": alpha,
                            "trial": trial, "mis": mis_val,
                            "coverage_pct": cov})
                        per_trial.setdefault((model, name, "mis", alpha),
                                             []).append(mis_val)
                        per_trial.setdefault((model, name, "coverage_pct",
                                              alpha), []).append(cov)

        # significance tests: hybrid against each baseline
        if spec.trials >= 2:
            for c in range(j):
                name = cs.predictands[c]
                for base_model in (MLR_LABEL, NAIVE_LABEL):
                    if base_model not in cs.points:
                        continue
                    for metric, alpha, higher_better in (
                            ("smape_pct", None, False),
                            ("rmse", None, False),
                            *((("mis", a, False) for a in alphas)),
                            *((("coverage_pct", a, True) for a in alphas))):
                        a_key = (HYBRID_LABEL, name, metric, alpha)
                        b_key = (base_model, name, metric, alpha)
                        if a_key not in per_trial or b_key not in per_trial:
                            continue
                        a_vals = np.asarray(per_trial[a_key])
                        b_vals = np.asarray(per_trial[b_key])
                        if len(a_vals) < 2:   # surviving trials too few
                            continue
                        if higher_better:
                            res = mt.t_test_one_sided(-a_vals, -b_vals)
                            direction = "meslstm_higher"
                        else:
                            res = mt.t_test_one_sided(a_vals, b_vals)
                            direction = "meslstm_lower"
                        test_rows.append({
                            "country": cs.country, "predictand": name,
                            "metric": metric,
                            "alpha": "" if alpha is None else alpha,
                            "baseline": base_model, "test": "t",
                            "direction": direction,
                            "statistic": res.statistic,
                            "p_value": res.p_value,
                            "degenerate": res.degenerate})

        hybrid_mean = np.mean(np.stack(cs.points[HYBRID_LABEL]), axis=0)
        for c in range(j):
            name = cs.predictands[c]
            for base_model in (MLR_LABEL, NAIVE_LABEL):
                if base_model not in cs.points:
                    continue
                try:
                    res = mt.dm_test(cs.actual[:, c], hybrid_mean[:, c],
                                     cs.points[base_model][0][:, c])
                except ContractError:
                    # e.g. too few nonzero actuals for MAPE differentials
                    continue
                test_rows.append({
                    "country": cs.country, "predictand": name,
                    "metric": "mape", "alpha": "", "baseline": base_model,
                    "test": "dm", "direction": "two_sided",
                    "statistic": res.statistic, "p_value": res.p_value,
                    "degenerate": res.degenerate})

        # trial-mean forecast paths for every model
        for model in cs.points:
            pts = np.mean(np.stack(cs.points[model]), axis=0)
            all_bounds = cs.bounds[model]
            for c in range(j):
                name = cs.predictands[c]
                for t, date in enumerate(cs.dates):
                    row = {"country": cs.country, "model": model,
                           "predictand": name, "date": date.isoformat(),
                           "actual": cs.actual[t, c], "point": pts[t, c]}
                    for alpha in alphas:
                        if all(alpha in b for b in all_bounds):
                            lo = np.mean([b[alpha][0][t, c] for b in all_bounds])
                            hi = np.mean([b[alpha][1][t, c] for b in all_bounds])
                            row[f"lower_{alpha:g}"] = lo
                            row[f"upper_{alpha:g}"] = hi
                        else:
                            row[f"lower_{alpha:g}"] = ""
                            row[f"upper_{alpha:g}"] = ""
                    forecast_rows.append(row)

    metric_agg = _aggregate_rows(metric_rows,
                                 ["country", "model", "predictand"],
                                 ["smape_pct", "rmse"]) if metric_rows else []
    interval_agg = _aggregate_rows(interval_rows,
                                   ["country", "model", "predictand", "alpha"],
                                   ["mis", "coverage_pct"]) \
        if interval_rows else []

    metrics_table = pd.DataFrame(metric_rows + metric_agg,
                                 columns=METRICS_COLUMNS)
    intervals_table = pd.DataFrame(interval_rows + interval_agg,
                                   columns=INTERVALS_COLUMNS)
    tests_table = pd.DataFrame(test_rows, columns=TESTS_COLUMNS)
    forecast_columns = ["country", "model", "predictand", "date", "actual",
                        "point"]
    for alpha in alphas:
        forecast_columns += [f"lower_{alpha:g}", f"upper_{alpha:g}"]
    forecasts_table = pd.DataFrame(forecast_rows, columns=forecast_columns)
    return ExperimentReport(metrics=metrics_table, intervals=intervals_table,
                            tests=tests_table, forecasts=forecasts_table)


def _country_task(args) -> tuple[str, _CountryScores | None, str | None]:
    spec, country = args
    try:
        frame = load(IngestSpec(path=spec.data_path, country=country,
                                features=spec.features,
                                predictands=spec.predictands,
                                fill_policy=spec.fill_policy))
        return country, _score_country(spec, country, frame), None
    except Exception as exc:
        return country, None, f"{type(exc).__name__}: {exc}"


def run_experiment(spec: ExperimentSpec,
                   write: bool = True) -> ExperimentReport:
    """Run every country and trial, assemble the tables, and (optionally)
    write them under ``spec.output_dir``.

    Countries fan out over a process pool when ``jobs`` > 1; results merge
    in specification order regardless of completion order.  The run fails
    only if every country fails.
    """
    tasks = [(spec, country) for country in spec.countries]
    if spec.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            outcomes = list(pool.map(_country_task, tasks))
    else:
        outcomes = [_country_task(task) for task in tasks]

    scores: list[_CountryScores] = []
    errors: dict[str, str] = {}
    for country, result, error in outcomes:
        if error is not None:
            errors[country] = error
        else:
            scores.append(result)
            for trial, message in result.trial_errors.items():
                errors[f"{country}/trial-{trial}"] = message
    if not scores:
        raise RuntimeError(f"every country failed: {errors}")

    report = _assemble_tables(spec, scores)
    report.errors = errors
    if write:
        report.write(spec.output_dir)
    return report


def evaluate_forecast_table(table: pd.DataFrame, frame: SeriesFrame,
                            alphas: tuple[float, ...]) -> pd.DataFrame:
    """Score an externally supplied forecast table against observed data.

    ``table`` follows the external forecast contract (date + predictand
    index, point and per-alpha bound columns).  Rows whose dates fall
    outside the frame are ignored.  Returns one row per predictand with
    sMAPE/RMSE and per-alpha MIS/coverage.
    """
    by_date = {frame.date_at(i): i for i in range(frame.n_steps)}
    rows = []
    for predictand in frame.predictand_names:
        col = frame.columns.index(predictand)
        pairs = [(by_date[d], d) for (d, p) in table.index
                 if p == predictand and d in by_date]
        if not pairs:
            continue
        idx = [i for i, _ in pairs]
        sub = table.loc[[(d, predictand) for _, d in pairs]]
        actual = frame.values[idx, col]
        point = sub["point"].to_numpy(dtype=float)
        row = {"predictand": predictand,
               "smape_pct": mt.smape(actual, point) * 100.0,
               "rmse": mt.rmse(actual, point)}
        for alpha in alphas:
            lo = sub[f"lower_{alpha:g}"].to_numpy(dtype=float)
            hi = sub[f"upper_{alpha:g}"].to_numpy(dtype=float)
            row[f"mis_{alpha:g}"] = mt.mis(actual, lo, hi, alpha)
            row[f"coverage_pct_{alpha:g}"] = mt.coverage(actual, lo, hi) * 100.0
        rows.append(row)
    return pd.DataFrame(rows)
