"""Static report figures: grouped bar charts of mean metrics and per-trial
box plots, written as SVG.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .errors import ContractError  # noqa: E402
from .experiment import ExperimentReport  # noqa: E402

__all__ = ["emit_plots"]


def _bar_chart(table: pd.DataFrame, value: str, title: str,
               path: Path) -> None:
    means = table[table["trial"] == "mean"]
    pivot = means.pivot_table(index="predictand", columns="model",
                              values=value, aggfunc="mean")
    fig, ax = plt.subplots(figsize=(7, 4))
    pivot.plot.bar(ax=ax, rot=0)
    ax.set_ylabel(value)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _box_plot(table: pd.DataFrame, value: str, predictand: str,
              path: Path) -> None:
    trials = table[(table["trial"].apply(lambda t: isinstance(t, int)
                                         or str(t).isdigit()))
                   & (table["predictand"] == predictand)]
    groups = [g[value].to_numpy() for _, g in trials.groupby("model",
                                                             sort=False)]
    labels = [name for name, _ in trials.groupby("model", sort=False)]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.boxplot(groups, tick_labels=labels, whis=(0, 100))
    ax.set_ylabel(value)
    ax.set_title(f"{value} per trial: {predictand}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def emit_plots(report: ExperimentReport, directory) -> list[Path]:
    """Write bar charts and box plots for every metric in the report.

    Returns the written file paths.  An empty report is an error.
    """
    if report.metrics.empty:
        raise ContractError("cannot plot an empty report")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    for value in ("smape_pct", "rmse"):
        path = directory / f"bar_{value}.svg"
        _bar_chart(report.metrics, value, f"Mean {value} by model", path)
        written.append(path)
    if not report.intervals.empty:
        for alpha, sub in report.intervals.groupby("alpha", sort=False):
            for value in ("mis", "coverage_pct"):
                path = directory / f"bar_{value}_alpha{alpha:g}.svg"
                _bar_chart(sub, value,
                           f"Mean {value} by model (alpha={alpha:g})", path)
                written.append(path)

    for predictand in report.metrics["predictand"].unique():
        for value in ("smape_pct", "rmse"):
            path = directory / f"box_{value}_{predictand}.svg"
            _box_plot(report.metrics, value, predictand, path)
            written.append(path)
    return written
