"""Synthetic regions for demos, tests and calibration runs."""

from __future__ import annotations

import numpy as np

from .ingest import RegionSeries
from .simulate import nb_sample

START = np.datetime64("2020-06-01")
# Sunday reporting dip, Monday catch-up
DOW_FACTOR = np.array([1.15, 1.05, 1.0, 1.0, 1.0, 0.95, 0.75])


def synthetic_region(
    region_id: str,
    trend: str = "rising",
    days: int = 120,
    population: int = 2_000_000,
    seed: int = 0,
    level: float = 400.0,
    alpha: float = 0.2,
    cfr: float = 0.015,
    prior_cum: int = 20_000,
    start=START,
) -> RegionSeries:
    """A region whose daily cases follow an exponential trend with NB noise.

    ``trend`` is ``rising``, ``falling``, ``flat``, ``sparse`` (mostly zero
    counts) or ``silent`` (no cases in the last 28 days).
    """
    rng = np.random.default_rng(seed)
    t = np.arange(days)
    dow = (np.asarray(np.datetime64(start, "D") + t).astype(np.int64) + 3) % 7
    if trend == "rising":
        mean = level * np.exp(0.025 * (t - days))
    elif trend == "falling":
        mean = level * np.exp(-0.02 * (t - days))
    elif trend == "flat":
        mean = np.full(days, level)
    elif trend == "sparse":
        mean = np.full(days, 0.3)
    elif trend == "silent":
        mean = np.where(t < days - 28, 0.5, 0.0)
    else:
        raise ValueError(f"unknown trend {trend!r}")
    mean = mean * DOW_FACTOR[dow]
    cases = nb_sample(mean, alpha, rng).astype(np.int64)
    ma = np.convolve(mean, np.ones(14) / 14, mode="full")[:days]
    ma[:13] = mean[:13]
    death_mean = cfr * ma
    deaths = nb_sample(death_mean, 0.1, rng).astype(np.int64)
    if trend == "silent":
        deaths[-28:] = 0
    return RegionSeries.from_daily(
        region_id, start, cases, deaths, population,
        cum_offset=(prior_cum if trend not in ("sparse", "silent") else 5, int(prior_cum * cfr)),
    )


def desk_regions(days: int = 120, seed: int = 7) -> list[RegionSeries]:
    """Three regions: rising, falling and sparse."""
    return [
        synthetic_region("rising", "rising", days, seed=seed),
        synthetic_region("falling", "falling", days, population=5_000_000, seed=seed + 1, level=900.0),
        synthetic_region("sparse", "sparse", days, population=50_000, seed=seed + 2),
    ]
