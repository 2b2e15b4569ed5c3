"""Seeded generator for the vendored evaluation snapshot.

Produces a CSV in the upstream COVID-19 aggregate schema (``location`` +
``date`` + the modelled feature columns, including the ``*_smoothed``
duplicates that ingestion must drop).  Per-country epidemics are sums of
logistic waves with weekday reporting effects, multiplicative noise, a
case-fatality ratio that drifts across waves, lagged testing and
vaccination programmes, and occasional missing days, so the file exercises
every ingestion path while staying fully reproducible.
"""

from __future__ import annotations

import datetime

import numpy as np
import pandas as pd

__all__ = ["SADC_COUNTRIES", "generate_snapshot", "write_snapshot",
           "SNAPSHOT_SEED"]

SADC_COUNTRIES: tuple[str, ...] = (
    "Angola", "Botswana", "Comoros", "Democratic Republic of Congo",
    "Eswatini", "Lesotho", "Madagascar", "Malawi", "Mauritius",
    "Mozambique", "Namibia", "Seychelles", "South Africa", "Tanzania",
    "Zambia", "Zimbabwe",
)

SNAPSHOT_SEED = 20220131
_ORIGIN = datetime.date(2020, 1, 1)
_END = datetime.date(2022, 1, 31)

# weekday reporting profile (Mon..Sun), jittered per country
_DOW_BASE = np.array([1.16, 1.09, 1.03, 1.00, 0.96, 0.76, 0.62])


def _logistic_increments(t: np.ndarray, center: float, width: float,
                         size: float) -> np.ndarray:
    sig = 1.0 / (1.0 + np.exp(-(t - center) / width))
    return size * sig * (1.0 - sig) / width


def _country_table(name: str, rng: np.random.Generator) -> pd.DataFrame:
    n_days = (_END - _ORIGIN).days + 1
    t = np.arange(n_days, dtype=np.float64)
    weekday = np.array([( _ORIGIN + datetime.timedelta(days=int(d))).weekday()
                        for d in t])

    population = float(np.round(10 ** rng.uniform(5.9, 7.8)))

    # four epidemic waves; the final one grows fast but kills little
    centers = [rng.uniform(130, 200), rng.uniform(330, 420),
               rng.uniform(500, 580), rng.uniform(665, 720)]
    widths = [rng.uniform(14, 26) for _ in centers]
    attack = [rng.uniform(0.004, 0.015), rng.uniform(0.006, 0.02),
              rng.uniform(0.008, 0.03), rng.uniform(0.015, 0.05)]
    fatality_mult = [rng.uniform(1.0, 1.4), rng.uniform(0.8, 1.2),
                     rng.uniform(0.9, 1.3), rng.uniform(0.2, 0.4)]

    cases_base = np.zeros(n_days)
    deaths_base = np.zeros(n_days)
    base_cfr = rng.uniform(0.015, 0.035)
    lag = int(rng.integers(10, 19))
    onset = rng.uniform(55, 110)
    for center, width, frac, fmult in zip(centers, widths, attack,
                                          fatality_mult):
        wave = _logistic_increments(t, center, width, frac * population)
        cases_base += wave
        shifted = np.zeros(n_days)
        shifted[lag:] = wave[:n_days - lag]
        deaths_base += base_cfr * fmult * shifted
    endemic = np.where(t >= onset, rng.uniform(0.5, 3.0), 0.0)
    cases_base = cases_base * (t >= onset) + endemic
    deaths_base = deaths_base * (t >= onset + lag)

    dow_jitter = 1.0 + rng.uniform(-0.05, 0.05, size=7)
    intensity = rng.uniform(0.5, 1.0)
    dow_cases = 1.0 + intensity * (_DOW_BASE * dow_jitter - 1.0)
    dow_deaths = 1.0 + 0.6 * intensity * (_DOW_BASE - 1.0)

    noise_c = rng.lognormal(0.0, rng.uniform(0.03, 0.09), size=n_days)
    noise_d = rng.lognormal(0.0, rng.uniform(0.04, 0.10), size=n_days)
    new_cases = np.rint(cases_base * dow_cases[weekday] * noise_c)
    new_deaths = np.rint(deaths_base * dow_deaths[weekday] * noise_d)
    new_cases = np.maximum(new_cases, 0.0)
    new_deaths = np.maximum(new_deaths, 0.0)
    total_cases = np.cumsum(new_cases)
    total_deaths = np.cumsum(new_deaths)

    # testing programme with sporadic reporting
    tpc = rng.uniform(6, 30) * (1.0 + 0.3 * np.sin(2 * np.pi * t / 400.0
                                                   + rng.uniform(0, 6)))
    base_tests = population * rng.uniform(2e-5, 2e-4)
    new_tests = np.rint(new_cases * tpc + base_tests
                        * rng.lognormal(0, 0.15, size=n_days))
    positive_rate = np.round(np.clip(new_cases / np.maximum(new_tests, 1.0),
                                     0.0, 0.5), 4)
    tests_per_case = np.round(np.clip(new_tests / np.maximum(new_cases, 1.0),
                                      0.0, 200.0), 1)
    total_tests = np.cumsum(new_tests)

    # vaccination rollout, absent before its start date
    vax_start = rng.uniform(430, 520)
    coverage = rng.uniform(0.10, 0.60)
    people = coverage * population / (1.0 + np.exp(-(t - vax_start - 90)
                                                   / rng.uniform(35, 60)))
    people = np.rint(np.where(t >= vax_start, people, 0.0))
    fully = np.rint(0.7 * np.concatenate([np.zeros(40), people[:-40]]))
    total_vax = people + fully
    new_vax = np.diff(total_vax, prepend=0.0)

    # reproduction rate from the un-noised growth of the case curve
    safe = np.maximum(cases_base, 1e-6)
    growth = np.zeros(n_days)
    growth[4:-4] = (np.log(safe[8:]) - np.log(safe[:-8])) / 8.0
    repro = np.round(np.clip(np.exp(growth * 5.0), 0.2, 3.5)
                     + rng.normal(0, 0.02, size=n_days), 3)

    prev = pd.Series(cases_base).rolling(14, min_periods=1).mean().to_numpy()
    stringency = np.clip(15.0 + 70.0 * (np.roll(prev, 7)
                                        / max(prev.max(), 1.0)) ** 0.7,
                         10.0, 95.0)
    stringency = np.round(stringency / 2.5) * 2.5

    per_million = 1e6 / population
    dates = [_ORIGIN + datetime.timedelta(days=int(d)) for d in t]
    table = pd.DataFrame({
        "location": name,
        "date": [d.isoformat() for d in dates],
        "total_cases": total_cases,
        "new_cases": new_cases,
        "new_cases_smoothed": np.round(
            pd.Series(new_cases).rolling(7, min_periods=1).mean(), 3),
        "total_deaths": total_deaths,
        "new_deaths": new_deaths,
        "new_deaths_smoothed": np.round(
            pd.Series(new_deaths).rolling(7, min_periods=1).mean(), 3),
        "total_cases_per_million": np.round(total_cases * per_million, 3),
        "new_cases_per_million": np.round(new_cases * per_million, 3),
        "total_deaths_per_million": np.round(total_deaths * per_million, 3),
        "new_deaths_per_million": np.round(new_deaths * per_million, 3),
        "reproduction_rate": repro,
        "stringency_index": stringency,
        "total_tests": total_tests,
        "new_tests": new_tests,
        "positive_rate": positive_rate,
        "tests_per_case": tests_per_case,
        "total_vaccinations": total_vax,
        "people_vaccinated": people,
        "people_fully_vaccinated": fully,
        "new_vaccinations": new_vax,
        "total_vaccinations_per_hundred": np.round(
            total_vax * 100.0 / population, 2),
        "people_vaccinated_per_hundred": np.round(
            people * 100.0 / population, 2),
        "people_fully_vaccinated_per_hundred": np.round(
            fully * 100.0 / population, 2),
        "population": population,
        "population_density": round(rng.uniform(2, 650), 1),
        "median_age": round(rng.uniform(17, 36), 1),
        "aged_65_older": round(rng.uniform(2, 11), 2),
        "aged_70_older": round(rng.uniform(1.5, 7), 2),
        "gdp_per_capita": round(rng.uniform(800, 22000), 1),
        "extreme_poverty": round(rng.uniform(1, 70), 1),
        "cardiovasc_death_rate": round(rng.uniform(150, 420), 1),
        "diabetes_prevalence": round(rng.uniform(1, 12), 2),
        "female_smokers": round(rng.uniform(1, 20), 1),
        "male_smokers": round(rng.uniform(10, 50), 1),
        "handwashing_facilities": round(rng.uniform(5, 80), 1),
        "hospital_beds_per_thousand": round(rng.uniform(0.5, 4.0), 2),
        "life_expectancy": round(rng.uniform(55, 76), 1),
        "human_development_index": round(rng.uniform(0.45, 0.82), 3),
    })

    # rows exist only from the first reported case onward
    first = int(np.argmax(total_cases >= 1.0))
    table = table.iloc[first:].reset_index(drop=True)

    # sporadic testing-report gaps
    gap_mask = rng.random(len(table)) < 0.15
    for column in ("new_tests", "positive_rate", "tests_per_case"):
        table.loc[gap_mask, column] = np.nan

    # vaccination columns are simply absent before the programme starts
    pre_vax = table["total_vaccinations"] == 0.0
    for column in ("total_vaccinations", "people_vaccinated",
                   "people_fully_vaccinated", "new_vaccinations",
                   "total_vaccinations_per_hundred",
                   "people_vaccinated_per_hundred",
                   "people_fully_vaccinated_per_hundred"):
        table.loc[pre_vax, column] = np.nan
    return table


def generate_snapshot(seed: int = SNAPSHOT_SEED) -> pd.DataFrame:
    """Deterministic multi-country snapshot table."""
    parts = []
    for index, country in enumerate(SADC_COUNTRIES):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(index,)))
        table = _country_table(country, rng)
        # a few countries miss occasional whole days
        if index % 5 == 2:
            drop = rng.choice(np.arange(30, len(table) - 30),
                              size=3, replace=False)
            table = table.drop(table.index[sorted(drop)])
        parts.append(table)
    return pd.concat(parts, ignore_index=True)


def write_snapshot(path, seed: int = SNAPSHOT_SEED) -> None:
    generate_snapshot(seed).to_csv(path, index=False)
