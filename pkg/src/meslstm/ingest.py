"""OWID-style COVID-19 CSV ingestion: country slicing, projection onto the
modelled feature list, daily-calendar reindexing, and gap filling.

Smoothed duplicate columns (``*_smoothed``) are always excluded.  Cumulative
counters are forward-filled with leading gaps set to zero; every other
feature is forward- then back-filled.
"""

from __future__ import annotations

import datetime
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError, DataQualityWarning
from .frame import SeriesFrame

__all__ = ["IngestSpec", "MultiLoadResult", "DEFAULT_FEATURES",
           "DEFAULT_PREDICTANDS", "load", "multi_load", "dump_normalized"]

# Modelled attribute list for the source dataset (smoothed duplicates are
# intentionally absent).  Features missing from a file are dropped with a
# warning; predictands must always be present.
DEFAULT_FEATURES: tuple[str, ...] = (
    "total_cases", "new_cases", "total_cases_per_million",
    "new_cases_per_million", "total_deaths", "new_deaths",
    "total_deaths_per_million", "new_deaths_per_million",
    "icu_patients", "icu_patients_per_million", "hosp_patients",
    "weekly_icu_admissions", "weekly_icu_admissions_per_million",
    "weekly_hosp_admissions", "weekly_hosp_admissions_per_million",
    "stringency_index", "reproduction_rate",
    "total_tests", "new_tests", "positive_rate", "tests_per_case",
    "total_vaccinations", "people_vaccinated", "people_fully_vaccinated",
    "new_vaccinations", "total_vaccinations_per_hundred",
    "people_vaccinated_per_hundred", "people_fully_vaccinated_per_hundred",
    "population", "population_density", "median_age", "aged_65_older",
    "aged_70_older", "gdp_per_capita", "extreme_poverty",
    "cardiovasc_death_rate", "diabetes_prevalence", "female_smokers",
    "male_smokers", "handwashing_facilities", "hospital_beds_per_thousand",
    "life_expectancy", "human_development_index", "excess_mortality",
)

DEFAULT_PREDICTANDS: tuple[str, ...] = ("total_cases", "total_deaths")

# forward-filled with leading zeros (monotone counters);
# everything else is forward- then back-filled
_CUMULATIVE_PREFIXES = ("total_", "people_")

FILL_POLICIES = ("default", "ffill")


@dataclass(frozen=True)
class IngestSpec:
    """What to load: file, country, features, predictands, fill policy."""

    path: str
    country: str
    features: tuple[str, ...] = DEFAULT_FEATURES
    predictands: tuple[str, ...] = DEFAULT_PREDICTANDS
    fill_policy: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "predictands", tuple(self.predictands))
        if self.fill_policy not in FILL_POLICIES:
            raise DataError(f"unknown fill policy {self.fill_policy!r}")
        missing = set(self.predictands) - set(self.features)
        if missing:
            raise DataError(f"predictands must be listed as features: "
                            f"{sorted(missing)}")


@dataclass
class MultiLoadResult:
    frames: dict[str, SeriesFrame] = field(default_factory=dict)
    errors: dict[str, Exception] = field(default_factory=dict)


def _is_cumulative(column: str) -> bool:
    return column.startswith(_CUMULATIVE_PREFIXES) \
        and not column.endswith(("_per_hundred", "_per_million", "_per_thousand"))


def _select_country(table: pd.DataFrame, country: str) -> pd.DataFrame:
    rows = table[table["location"] == country]
    if rows.empty:
        lowered = table["location"].str.lower() == country.lower()
        rows = table[lowered]
    if rows.empty:
        raise DataError(f"country {country!r} not found in dataset")
    return rows


def load(spec: IngestSpec) -> SeriesFrame:
    """Load one country slice as a gapless daily frame.

    Rows are filtered to the country, sorted, reindexed to a contiguous
    daily calendar, and filled per policy.  Smoothed duplicate columns are
    excluded; listed features absent from the file are dropped with a
    warning.  Decreasing cumulative predictands are reported as data-quality
    warnings, not errors.
    """
    table = pd.read_csv(spec.path)
    for required in ("location", "date"):
        if required not in table.columns:
            raise DataError(f"dataset is missing the {required!r} column")
    rows = _select_country(table, spec.country)

    available = []
    for feature in spec.features:
        if feature.endswith("_smoothed"):
            continue
        if feature not in rows.columns:
            if feature in spec.predictands:
                raise DataError(
                    f"predictand column {feature!r} absent from dataset")
            warnings.warn(f"feature {feature!r} absent from dataset; dropped",
                          DataQualityWarning, stacklevel=2)
            continue
        available.append(feature)
    for predictand in spec.predictands:
        if predictand not in available:
            raise DataError(f"predictand column {predictand!r} absent from dataset")

    rows = rows.assign(date=pd.to_datetime(rows["date"]))
    rows = rows.sort_values("date").drop_duplicates("date", keep="last")
    calendar = pd.date_range(rows["date"].iloc[0], rows["date"].iloc[-1],
                             freq="D")
    data = rows.set_index("date")[available].reindex(calendar)

    for column in available:
        series = data[column]
        if spec.fill_policy == "default" and _is_cumulative(column):
            data[column] = series.ffill().fillna(0.0)
        else:
            data[column] = series.ffill().bfill()
        if data[column].isna().any():
            data[column] = data[column].fillna(0.0)
            warnings.warn(f"feature {column!r} has no observed values; "
                          f"filled with zeros", DataQualityWarning,
                          stacklevel=2)

    if data.empty:
        raise DataError(f"no rows remain for country {spec.country!r}")

    for predictand in spec.predictands:
        if _is_cumulative(predictand) and np.any(np.diff(data[predictand]) < 0):
            warnings.warn(
                f"cumulative predictand {predictand!r} decreases for "
                f"{spec.country!r} (source revision?)", DataQualityWarning,
                stacklevel=2)

    columns = tuple(available)
    predictand_indices = tuple(columns.index(p) for p in spec.predictands)
    epoch = calendar[0].date()
    offsets = np.arange(len(calendar), dtype=np.int64)
    return SeriesFrame(epoch=epoch, offsets=offsets,
                       values=data.to_numpy(dtype=np.float64),
                       columns=columns, predictand_indices=predictand_indices)


def multi_load(path: str, countries: list[str],
               features: tuple[str, ...] = DEFAULT_FEATURES,
               predictands: tuple[str, ...] = DEFAULT_PREDICTANDS,
               fill_policy: str = "default") -> MultiLoadResult:
    """Independent frames per country; failures are collected, not raised."""
    result = MultiLoadResult()
    for country in countries:
        spec = IngestSpec(path=path, country=country, features=features,
                          predictands=predictands, fill_policy=fill_policy)
        try:
            result.frames[country] = load(spec)
        except Exception as exc:   # per-country isolation
            result.errors[country] = exc
    return result


def dump_normalized(frame: SeriesFrame, path) -> None:
    """Debug dump of a normalized frame as CSV (date + covariates)."""
    dates = [frame.epoch + datetime.timedelta(days=int(o))
             for o in frame.offsets]
    table = pd.DataFrame(frame.values, columns=list(frame.columns))
    table.insert(0, "date", dates)
    table.to_csv(path, index=False)
