"""Command-line front end.

Subcommands: ingest, tune, fit, forecast, evaluate, experiment, plot.
Configuration lives in a single JSON file; the flags below override it.
Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import pandas as pd

from . import baselines as bl
from . import ingest as ig
from .errors import DataError, TrainingDivergenceError
from .experiment import (ExperimentReport, ExperimentSpec,
                         evaluate_forecast_table, run_experiment)
from .frame import SplitSpec, split
from .pipeline import (ModelConfig, config_from_dict, config_to_dict,
                       expand_grid, fit, grid_search, load_model, save_model)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):   # keep exit-code control here
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="meslstm",
                     description="Hybrid smoothing + LSTM forecaster")
    parser.add_argument("--config", type=Path, help="JSON configuration file")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", type=Path, help="source CSV path")
    common.add_argument("--country", action="append",
                        help="country name (repeatable)")
    common.add_argument("--seed", type=int, help="root random seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--alpha", type=str,
                        help="comma-separated significance levels")

    sub.add_parser("ingest", parents=[common],
                   help="dump normalized per-country CSVs")
    sub.add_parser("tune", parents=[common],
                   help="grid-search the model configuration")
    sub.add_parser("fit", parents=[common], help="fit and save one model")
    fc = sub.add_parser("forecast", parents=[common],
                        help="forecast from a saved model")
    fc.add_argument("--model-dir", type=Path, required=True)
    ev = sub.add_parser("evaluate", parents=[common],
                        help="score a forecast CSV against observed data")
    ev.add_argument("--forecasts", type=Path, required=True)
    ex = sub.add_parser("experiment", parents=[common],
                        help="run the repeated-trial evaluation")
    ex.add_argument("--trials", type=int)
    ex.add_argument("--jobs", type=int)
    pl = sub.add_parser("plot", parents=[common],
                        help="render figures from a report directory")
    pl.add_argument("--report-dir", type=Path, required=True)
    return parser


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _model_config(raw: dict, args) -> ModelConfig:
    payload = dict(raw.get("model", {}))
    if args.seed is not None:
        payload["seed"] = args.seed
    if getattr(args, "alpha", None):
        payload["significance_levels"] = [float(a) for a
                                          in args.alpha.split(",")]
    return config_from_dict(payload)


def _data_section(raw: dict, args) -> dict:
    data = dict(raw.get("data", {}))
    if args.data is not None:
        data["path"] = str(args.data)
    if args.country:
        data["countries"] = list(args.country)
    if "path" not in data:
        raise _UsageError("no data path given (--data or config data.path)")
    if not data.get("countries"):
        raise _UsageError("no countries given (--country or config "
                          "data.countries)")
    data.setdefault("features", list(ig.DEFAULT_FEATURES))
    data.setdefault("predictands", list(ig.DEFAULT_PREDICTANDS))
    data.setdefault("fill_policy", "default")
    return data


def _split_spec(raw: dict) -> SplitSpec:
    section = raw.get("split", {})
    return SplitSpec(train=section.get("train", 0.75),
                     validation=section.get("validation", 0.15),
                     test=section.get("test", 0.10))


def _out_dir(raw: dict, args) -> Path:
    if args.out is not None:
        return Path(args.out)
    return Path(raw.get("experiment", {}).get("output_dir", "out"))


def _ingest_frame(data: dict, country: str):
    return ig.load(ig.IngestSpec(path=data["path"], country=country,
                                 features=tuple(data["features"]),
                                 predictands=tuple(data["predictands"]),
                                 fill_policy=data["fill_policy"]))


def _cmd_ingest(raw: dict, args) -> int:
    data = _data_section(raw, args)
    out = _out_dir(raw, args)
    out.mkdir(parents=True, exist_ok=True)
    result = ig.multi_load(data["path"], data["countries"],
                           tuple(data["features"]),
                           tuple(data["predictands"]), data["fill_policy"])
    for country, frame in result.frames.items():
        target = out / f"normalized_{country.replace(' ', '_')}.csv"
        ig.dump_normalized(frame, target)
        print(f"wrote {target} ({frame.n_steps} rows, "
              f"{frame.n_covariates} covariates)")
    for country, error in result.errors.items():
        print(f"failed {country}: {error}", file=sys.stderr)
    if not result.frames:
        raise DataError("no country could be ingested")
    return EXIT_OK


def _cmd_tune(raw: dict, args) -> int:
    data = _data_section(raw, args)
    config = _model_config(raw, args)
    grid = raw.get("grid")
    if not grid:
        raise _UsageError("tune requires a 'grid' section in the config")
    country = data["countries"][0]
    frame = _ingest_frame(data, country)
    candidates = expand_grid(config, grid)
    train, validation, _ = split(frame, _split_spec(raw),
                                 window=max(grid.get("window",
                                                     [config.window])))
    best = grid_search(train, validation, candidates)
    out = _out_dir(raw, args)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "tuned_config.json"
    target.write_text(json.dumps(config_to_dict(best), indent=2))
    print(f"best configuration (of {len(candidates)}): lstm_size="
          f"{best.lstm_size} epochs={best.epochs} batch_size="
          f"{best.batch_size} window={best.window} -> {target}")
    return EXIT_OK


def _cmd_fit(raw: dict, args) -> int:
    data = _data_section(raw, args)
    config = _model_config(raw, args)
    country = data["countries"][0]
    frame = _ingest_frame(data, country)
    train, validation, _ = split(frame, _split_spec(raw),
                                 window=config.window)
    model = fit(train, validation, config)
    out = _out_dir(raw, args) / f"model_{country.replace(' ', '_')}"
    save_model(model, out)
    print(f"fitted {country}: final training loss "
          f"{model.diagnostics['train_loss'][-1]:.6f}; saved to {out}")
    return EXIT_OK


def _cmd_forecast(raw: dict, args) -> int:
    model = load_model(args.model_dir)
    result = model.predict()
    out = _out_dir(raw, args)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for step in range(result.point.shape[0]):
        for c, name in enumerate(result.predictand_names):
            row = {"step": step + 1, "predictand": name,
                   "point": result.point[step, c]}
            for alpha, (lo, hi) in result.intervals.items():
                row[f"lower_{alpha:g}"] = lo[step, c]
                row[f"upper_{alpha:g}"] = hi[step, c]
            rows.append(row)
    target = out / "forecast.csv"
    pd.DataFrame(rows).to_csv(target, index=False)
    print(f"wrote {target}")
    return EXIT_OK


def _cmd_evaluate(raw: dict, args) -> int:
    data = _data_section(raw, args)
    config = _model_config(raw, args)
    alphas = config.significance_levels
    country = data["countries"][0]
    frame = _ingest_frame(data, country)
    table = bl.read_external_forecasts(args.forecasts, alphas)
    scores = evaluate_forecast_table(table, frame, alphas)
    if scores.empty:
        raise DataError("no forecast rows matched the observed data")
    out = _out_dir(raw, args)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "evaluation.csv"
    scores.to_csv(target, index=False)
    print(scores.to_string(index=False))
    print(f"wrote {target}")
    return EXIT_OK


def _cmd_experiment(raw: dict, args) -> int:
    data = _data_section(raw, args)
    config = _model_config(raw, args)
    section = raw.get("experiment", {})
    spec = ExperimentSpec(
        data_path=data["path"], countries=tuple(data["countries"]),
        config=config, split=_split_spec(raw),
        trials=args.trials if args.trials is not None
        else section.get("trials", 35),
        root_seed=args.seed if args.seed is not None
        else section.get("seed", 0),
        baselines=tuple(section.get("baselines", ["mlr", "seasonal_naive"])),
        features=tuple(data["features"]),
        predictands=tuple(data["predictands"]),
        fill_policy=data["fill_policy"],
        output_dir=str(_out_dir(raw, args)),
        jobs=args.jobs if args.jobs is not None else section.get("jobs", 1))
    report = run_experiment(spec)
    print(f"wrote report to {spec.output_dir} "
          f"({len(report.metrics)} metric rows, {len(report.errors)} errors)")
    return EXIT_OK


def _cmd_plot(raw: dict, args) -> int:
    from .plots import emit_plots
    report_dir = Path(args.report_dir)
    report = ExperimentReport(
        metrics=pd.read_csv(report_dir / "metrics.csv"),
        intervals=pd.read_csv(report_dir / "intervals.csv"),
        tests=pd.read_csv(report_dir / "tests.csv"),
        forecasts=pd.read_csv(report_dir / "forecasts.csv"))
    out = _out_dir(raw, args)
    written = emit_plots(report, out)
    print(f"wrote {len(written)} figures to {out}")
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "tune": _cmd_tune,
    "fit": _cmd_fit,
    "forecast": _cmd_forecast,
    "evaluate": _cmd_evaluate,
    "experiment": _cmd_experiment,
    "plot": _cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        raw = _load_config(args.config)
        return _COMMANDS[args.command](raw, args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
