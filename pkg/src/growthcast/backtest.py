"""Rolling-origin backtests: interval coverage and median absolute error."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from . import blend
from .config import EngineConfig
from .ingest import RegionSeries
from .pipeline import run_region

log = logging.getLogger(__name__)

OBSERVED = "observed"
SELF = "self"
REPORT_HEADER = [
    "region", "origin", "kind", "horizon", "target_date", "truth", "median",
    "lo50", "hi50", "lo80", "hi80", "in50", "in80", "abs_err",
]


@dataclass(frozen=True)
class BacktestReport:
    rows: list
    skipped: list

    def _select(self, kind):
        return [r for r in self.rows if kind is None or r[2] == kind]

    def coverage(self, level: int, kind: str | None = "cases") -> float:
        col = {50: 11, 80: 12}[level]
        rows = self._select(kind)
        return float(np.mean([r[col] for r in rows])) if rows else float("nan")

    def mae(self, kind: str | None = "cases") -> float:
        rows = self._select(kind)
        return float(np.mean([r[13] for r in rows])) if rows else float("nan")

    def n_pairs(self, kind: str | None = "cases") -> int:
        return len(self._select(kind))


def truth_seed(seed: int, region_id: str, origin) -> int:
    h = hashlib.sha256(f"truth|{seed}|{region_id}|{origin}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def _score(region_id, origin, kind, ens, truth):
    q = np.quantile(ens.samples.astype(float), [0.1, 0.25, 0.5, 0.75, 0.9], axis=0)
    rows = []
    for k in range(ens.horizon):
        y = int(truth[k])
        lo80, lo50, med, hi50, hi80 = q[:, k]
        rows.append((
            region_id, str(origin), kind, k + 1, str(ens.target_dates[k]), y, float(med),
            float(lo50), float(hi50), float(lo80), float(hi80),
            int(lo50 <= y <= hi50), int(lo80 <= y <= hi80), abs(y - float(med)),
        ))
    return rows


def backtest(series_list, origins, config: EngineConfig, truth: str = OBSERVED) -> BacktestReport:
    """Forecast from each origin and score against the following ``horizon`` days.

    With ``truth="observed"`` the data after the origin is the truth. With
    ``truth="self"`` the truth is an independent draw from the engine itself
    (a one-sample run under a seed derived from the origin), which makes the
    report a calibration check of the sampler.
    """
    K = config.horizon
    rows, skipped = [], []
    for series in sorted(series_list, key=lambda s: s.region_id):
        for origin in origins:
            origin = np.datetime64(origin, "D")
            hist = series.truncate(origin)
            future = series.dates[series.dates > origin]
            if len(hist) < blend.WINDOW_DAYS or (len(hist) and hist.last_date != origin):
                log.warning("%s: origin %s leaves too little history; skipped", series.region_id, origin)
                skipped.append((series.region_id, str(origin), "history"))
                continue
            if truth == OBSERVED and len(future) < K:
                log.warning("%s: origin %s has fewer than %d days of truth; skipped", series.region_id, origin, K)
                skipped.append((series.region_id, str(origin), "future"))
                continue
            res = run_region(hist, config)
            if not res.ok:
                skipped.append((series.region_id, str(origin), res.error))
                continue
            if truth == OBSERVED:
                fut = series.dates > origin
                truth_cases = series.daily_cases[fut][:K]
                truth_deaths = series.daily_deaths[fut][:K]
            elif truth == SELF:
                tconf = config.replace(samples=1, seed=truth_seed(config.seed, series.region_id, origin))
                tres = run_region(hist, tconf)
                if not tres.ok:
                    skipped.append((series.region_id, str(origin), tres.error))
                    continue
                truth_cases = tres.cases.ensemble.samples[0]
                truth_deaths = tres.deaths.samples[0]
            else:
                raise ValueError(f"unknown truth source {truth!r}")
            rows += _score(series.region_id, origin, "cases", res.cases.ensemble, truth_cases)
            rows += _score(series.region_id, origin, "deaths", res.deaths, truth_deaths)
    return BacktestReport(rows, skipped)
