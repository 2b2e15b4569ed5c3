"""Experiment harness: report schema, aggregation arithmetic, determinism,
error isolation, and external forecast scoring."""

import warnings
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from meslstm.baselines import read_external_forecasts
from meslstm.experiment import (HYBRID_LABEL, MLR_LABEL, NAIVE_LABEL,
                                ExperimentSpec, evaluate_forecast_table,
                                run_experiment)
from meslstm.frame import SplitSpec
from meslstm.ingest import IngestSpec, load
from meslstm.pipeline import ModelConfig

SNAPSHOT = Path(__file__).resolve().parent.parent / "data" / "owid_snapshot.csv"
GOLDEN = Path(__file__).resolve().parent / "data" / "expected_headers.txt"


def small_spec(tmp_dir, countries=("Mauritius",), trials=2, jobs=1):
    return ExperimentSpec(
        data_path=str(SNAPSHOT), countries=countries,
        config=ModelConfig(lstm_size=10, epochs=4, n_mc=40),
        split=SplitSpec(), trials=trials, root_seed=11,
        output_dir=str(tmp_dir), jobs=jobs)


@pytest.fixture(scope="module")
def report_and_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("report")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = run_experiment(small_spec(out))
    return report, out


class TestReportSchema:
    def test_headers_match_golden_file(self, report_and_dir):
        _, out = report_and_dir
        expected = {}
        for line in GOLDEN.read_text().strip().splitlines():
            name, header = line.split(": ", 1)
            expected[name] = header
        for name, header in expected.items():
            first_line = (out / name).read_text().splitlines()[0]
            assert first_line == header, f"{name} header drifted"

    def test_all_models_present(self, report_and_dir):
        report, _ = report_and_dir
        assert set(report.metrics["model"]) == {HYBRID_LABEL, MLR_LABEL,
                                                NAIVE_LABEL}

    def test_trial_rows_and_aggregates(self, report_and_dir):
        report, _ = report_and_dir
        trials = report.metrics[report.metrics["model"] == HYBRID_LABEL]
        labels = set(trials["trial"])
        assert labels == {0, 1, "mean", "std"}

    def test_naive_has_no_interval_rows(self, report_and_dir):
        report, _ = report_and_dir
        assert NAIVE_LABEL not in set(report.intervals["model"])


class TestAggregation:
    def test_mean_std_match_recomputation(self, report_and_dir):
        report, _ = report_and_dir
        table = report.metrics
        for (country, model, predictand), group in table.groupby(
                ["country", "model", "predictand"]):
            per_trial = group[group["trial"].apply(
                lambda t: isinstance(t, int))]
            mean_row = group[group["trial"] == "mean"].iloc[0]
            std_row = group[group["trial"] == "std"].iloc[0]
            values = per_trial["smape_pct"].to_numpy(dtype=float)
            assert mean_row["smape_pct"] == pytest.approx(values.mean(),
                                                          abs=1e-12)
            expected_std = 0.0 if np.ptp(values) == 0 else values.std()
            assert std_row["smape_pct"] == pytest.approx(expected_std,
                                                         abs=1e-12)

    def test_deterministic_baselines_have_zero_std(self, report_and_dir):
        report, _ = report_and_dir
        stds = report.metrics[(report.metrics["trial"] == "std")
                              & (report.metrics["model"] != HYBRID_LABEL)]
        assert (stds["smape_pct"] == 0.0).all()
        assert (stds["rmse"] == 0.0).all()

    def test_dm_rows_exist_per_baseline(self, report_and_dir):
        report, _ = report_and_dir
        dm = report.tests[report.tests["test"] == "dm"]
        assert set(dm["baseline"]) == {MLR_LABEL, NAIVE_LABEL}
        assert set(dm["predictand"]) == {"total_cases", "total_deaths"}


class TestDeterminism:
    def test_rerun_is_bitwise_identical(self, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run_experiment(small_spec(out_a))
            run_experiment(small_spec(out_b))
        for name in ("metrics.csv", "intervals.csv", "tests.csv",
                     "forecasts.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_parallel_jobs_match_serial(self, tmp_path):
        out_serial = tmp_path / "serial"
        out_parallel = tmp_path / "parallel"
        countries = ("Mauritius", "Seychelles")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run_experiment(small_spec(out_serial, countries=countries))
            run_experiment(small_spec(out_parallel, countries=countries,
                                      jobs=2))
        for name in ("metrics.csv", "tests.csv"):
            assert (out_serial / name).read_bytes() == \
                (out_parallel / name).read_bytes()


class TestErrorIsolation:
    def test_bad_country_is_recorded_not_fatal(self, tmp_path):
        spec = small_spec(tmp_path, countries=("Mauritius", "Wakanda"))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = run_experiment(spec)
        assert "Wakanda" in report.errors
        assert set(report.metrics["country"]) == {"Mauritius"}

    def test_all_countries_failing_raises(self, tmp_path):
        spec = small_spec(tmp_path, countries=("Wakanda",))
        with pytest.raises(RuntimeError, match="every country failed"):
            run_experiment(spec)


class TestExternalEvaluation:
    def test_scores_written_forecasts(self, report_and_dir, tmp_path):
        report, out = report_and_dir
        table = pd.read_csv(out / "forecasts.csv")
        hybrid = table[table["model"] == HYBRID_LABEL]
        external = tmp_path / "external.csv"
        hybrid.drop(columns=["country", "model", "actual"]).to_csv(
            external, index=False)
        alphas = (0.05, 0.1, 0.2)
        parsed = read_external_forecasts(external, alphas)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            frame = load(IngestSpec(path=str(SNAPSHOT), country="Mauritius"))
        scores = evaluate_forecast_table(parsed, frame, alphas)
        assert set(scores["predictand"]) == {"total_cases", "total_deaths"}
        assert (scores["smape_pct"] >= 0).all()
        assert (scores["mis_0.05"] >= 0).all()
