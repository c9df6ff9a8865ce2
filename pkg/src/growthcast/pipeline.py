"""Per-region pipeline, quantile summaries and output files."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cases as cases_mod
from . import deaths as deaths_mod
from .config import EngineConfig
from .growth import SparseRegime
from .ingest import RegionSeries, parse_timeseries
from .outliers import OutlierReport, clean_series
from .simulate import ForecastEnsemble

log = logging.getLogger(__name__)

QUANTILE_HEADER = ["region", "forecast_date", "target_date", "kind", "quantile", "value"]


@dataclass
class RegionResult:
    region_id: str
    observed: RegionSeries
    adjusted: RegionSeries | None = None
    case_outliers: OutlierReport | None = None
    death_outliers: OutlierReport | None = None
    cases: cases_mod.CaseForecast | None = None
    death_fit: deaths_mod.DeathFit | None = None
    deaths: ForecastEnsemble | None = None
    error: str | None = None
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.error is None


def adjust_series(series: RegionSeries, config: EngineConfig):
    """Outlier-adjusted copy of ``series``; cumulative baselines on day 0 are kept."""
    dow = series.weekdays
    rc = clean_series(series.daily_cases, dow, config.outliers)
    rd = clean_series(series.daily_deaths, dow, config.outliers)
    offset = (
        int(series.cum_cases[0] - rc.adjusted[0]),
        int(series.cum_deaths[0] - rd.adjusted[0]),
    )
    adjusted = RegionSeries.from_daily(
        series.region_id, series.dates[0], rc.adjusted, rd.adjusted, series.population, cum_offset=offset,
    )
    return adjusted, rc, rd


def run_region(series: RegionSeries, config: EngineConfig) -> RegionResult:
    result = RegionResult(series.region_id, series)
    try:
        adjusted, rc, rd = adjust_series(series, config)
        result.adjusted, result.case_outliers, result.death_outliers = adjusted, rc, rd
        result.cases = cases_mod.forecast_cases(adjusted, config)
        try:
            result.death_fit = deaths_mod.fit_death_tuning(adjusted, config)
        except SparseRegime as exc:
            result.notes.append(f"deaths: {exc}")
        result.deaths = deaths_mod.forecast_deaths(adjusted, result.cases, config, result.death_fit)
        result.notes.extend(result.cases.ensemble.notes)
    except Exception as exc:  # one bad region must not abort the others
        log.exception("%s: pipeline failed", series.region_id)
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def run_regions(series_list, config: EngineConfig, workers: int | None = None) -> list[RegionResult]:
    workers = config.workers if workers is None else workers
    series_list = sorted(series_list, key=lambda s: s.region_id)
    if workers <= 1:
        return [run_region(s, config) for s in series_list]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: run_region(s, config), series_list))


def quantiles(ensemble: ForecastEnsemble, levels, forecast_date=None) -> list[tuple]:
    """Type-7 empirical quantiles per target day."""
    levels = np.asarray(levels, dtype=float)
    q = np.quantile(ensemble.samples.astype(float), levels, axis=0)  # (L, K); linear == type 7
    q = np.maximum.accumulate(q, axis=0)  # guard against rounding inversions
    fdate = str(forecast_date if forecast_date is not None else ensemble.target_dates[0] - 1)
    rows = []
    for k, target in enumerate(ensemble.target_dates):
        for j, level in enumerate(levels):
            rows.append((ensemble.region_id, fdate, str(target), ensemble.kind, float(level), float(q[j, k])))
    return rows


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue(), encoding="utf-8")


def quantile_rows(results, config: EngineConfig) -> list[tuple]:
    rows = []
    for r in results:
        if not r.ok:
            continue
        fdate = r.observed.last_date
        rows += quantiles(r.cases.ensemble, config.quantile_levels, fdate)
        rows += quantiles(r.deaths, config.quantile_levels, fdate)
    return rows


def sample_rows(results) -> list[tuple]:
    rows = []
    for r in results:
        if not r.ok:
            continue
        for ens in (r.cases.ensemble, r.deaths):
            for s in range(ens.samples.shape[0]):
                for d, v in zip(ens.target_dates, ens.samples[s]):
                    rows.append((ens.region_id, ens.kind, s, str(d), int(v)))
    return rows


def posterior_rows(results) -> list[tuple]:
    rows = []
    for r in results:
        if not r.ok or r.cases.fit is None:
            continue
        post = r.cases.fit.posterior
        for c, d, p in zip(post.candidates, post.distances, post.probs):
            rows.append((r.region_id, c.eta, c.omega, c.phi, float(d), float(p)))
    return rows


def death_posterior_rows(results) -> list[tuple]:
    rows = []
    for r in results:
        if not r.ok or r.death_fit is None:
            continue
        post = r.death_fit.posterior
        for c, d, p in zip(post.candidates, post.distances, post.probs):
            rows.append((r.region_id, c.nu, c.theta_lower, c.theta_upper, float(d), float(p)))
    return rows


def outlier_rows(results) -> list[tuple]:
    rows = []
    for r in results:
        if r.case_outliers is None:
            continue
        for kind, rep in (("cases", r.case_outliers), ("deaths", r.death_outliers)):
            for d, o, v, a in zip(r.observed.dates, rep.original, rep.votes, rep.adjusted):
                rows.append((r.region_id, kind, str(d), int(o), int(v), int(a)))
    return rows


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, list):
        return [_clean(v) for v in x]
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    return x


def _ribbons(ens: ForecastEnsemble) -> dict:
    q = np.quantile(ens.samples.astype(float), [0.1, 0.25, 0.5, 0.75, 0.9], axis=0)
    return {
        "dates": [str(d) for d in ens.target_dates],
        "regime": ens.regime,
        "q10": q[0], "q25": q[1], "median": q[2], "q75": q[3], "q90": q[4],
    }


def plot_data(results) -> dict:
    out = {}
    for r in results:
        entry = {"observed": {
            "dates": [str(d) for d in r.observed.dates],
            "cases": r.observed.daily_cases.astype(int).tolist(),
            "deaths": r.observed.daily_deaths.astype(int).tolist(),
        }, "error": r.error}
        if r.case_outliers is not None:
            entry["adjusted"] = {
                "cases": r.case_outliers.adjusted.tolist(),
                "deaths": r.death_outliers.adjusted.tolist(),
                "case_outlier": r.case_outliers.flags.tolist(),
                "death_outlier": r.death_outliers.flags.tolist(),
            }
        if r.ok:
            fit = r.cases.fit
            if fit is not None:
                dates = r.observed.dates
                entry["growth"] = {
                    "tau": fit.tau,
                    "train_dates": [str(dates[i]) for i in fit.split.train],
                    "train_logit": fit.kappa_logit[fit.split.train],
                    "test_dates": [str(dates[i]) for i in fit.split.test],
                    "test_logit": fit.kappa_logit[fit.split.test],
                    "trend_test": fit.trend_test,
                    "constant_test": fit.constant_test,
                    "included": fit.train_fit.included,
                }
                entry["posterior"] = {
                    "eta": [c.eta for c in fit.posterior.candidates],
                    "omega": [c.omega for c in fit.posterior.candidates],
                    "phi": [c.phi for c in fit.posterior.candidates],
                    "prob": fit.posterior.probs,
                }
            entry["forecast"] = {"cases": _ribbons(r.cases.ensemble), "deaths": _ribbons(r.deaths)}
        out[r.region_id] = _clean(entry)
    return out


def summary_rows(results) -> list[tuple]:
    rows = []
    for r in results:
        status = "ok" if r.ok else "failed"
        case_regime = r.cases.ensemble.regime if r.ok else ""
        death_regime = r.deaths.regime if r.ok else ""
        detail = r.error or "; ".join(r.notes)
        rows.append((r.region_id, status, case_regime, death_regime, detail))
    return rows


def load_inputs(data, population, layout="long-daily", deaths_data=None, regions=None) -> list[RegionSeries]:
    raw = Path(data).read_text(encoding="utf-8")
    pops = Path(population).read_text(encoding="utf-8")
    draw = Path(deaths_data).read_text(encoding="utf-8") if deaths_data else None
    series = parse_timeseries(raw, layout, pops, draw)
    if regions:
        wanted = set(regions)
        series = [s for s in series if s.region_id in wanted]
    return series


def run_forecast(series_list, config: EngineConfig, out_dir, write_samples=False, write_posterior=True,
                 write_outliers=True) -> list[RegionResult]:
    """Run every region and write the output files. Returns the per-region results."""
    if not series_list:
        raise ValueError("no regions to forecast")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_regions(series_list, config)
    write_csv(out / "quantiles.csv", QUANTILE_HEADER, quantile_rows(results, config))
    write_csv(out / "summary.csv", ["region", "status", "case_regime", "death_regime", "detail"], summary_rows(results))
    if write_samples:
        write_csv(out / "samples.csv", ["region", "kind", "sample_id", "target_date", "value"], sample_rows(results))
    if write_posterior:
        write_csv(out / "posterior.csv", ["region", "eta", "omega", "phi", "distance", "prob"], posterior_rows(results))
        write_csv(out / "death_posterior.csv", ["region", "nu", "theta_lower", "theta_upper", "distance", "prob"],
                  death_posterior_rows(results))
    if write_outliers:
        write_csv(out / "outliers.csv", ["region", "kind", "date", "original", "votes", "adjusted"], outlier_rows(results))
    (out / "plotdata.json").write_text(json.dumps(plot_data(results), sort_keys=True) + "\n", encoding="utf-8")
    return results
