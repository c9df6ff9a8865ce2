"""Case-fatality-ratio deaths model driven by the case ensemble."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import blend
from .blend import SplitWindows, TuningPosterior
from .cases import CaseForecast
from .config import EngineConfig
from .growth import GrowthSeries, SparseRegime, clamped_logit, compute_tau, expit
from .ingest import RegionSeries, weekday_of
from .regress import RegressionFit, fit_dow_trend, predict
from .simulate import (
    FULL, SPARSE_EMPIRICAL, STREAM_DEATHS, TAIL_DAYS, ForecastEnsemble, classify_regime,
    derive_rng, sample_sparse,
)

log = logging.getLogger(__name__)

NU_CHOICES = (7, 14, 21, 28, 35)


@dataclass(frozen=True)
class DeathTuningCandidate:
    nu: int
    theta_lower: float
    theta_upper: float

    def __post_init__(self):
        if self.nu not in NU_CHOICES:
            raise ValueError(f"nu must be one of {NU_CHOICES}")
        if not self.theta_lower < self.theta_upper:
            raise ValueError("theta_lower must be below theta_upper")


def moving_average(series, nu: int, t: int) -> float:
    if t < nu - 1:
        raise ValueError(f"moving average of width {nu} needs index >= {nu - 1}")
    return float(np.mean(np.asarray(series, dtype=float)[t - nu + 1: t + 1]))


def trailing_means(x, nu: int) -> np.ndarray:
    """Trailing ``nu``-day means aligned to ``x``; NaN for the first ``nu - 1`` days."""
    x = np.asarray(x, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    out = np.full(len(x), np.nan)
    out[nu - 1:] = (c[nu:] - c[:-nu]) / nu
    return out


def cfr_series(deaths, cases, nu: int, dates=None, window=None) -> GrowthSeries:
    """Deaths over the trailing ``nu``-day case mean, plus its clamped logit.

    The clamp threshold is taken over ``window`` (all evaluable days if None).
    """
    deaths = np.asarray(deaths, dtype=float)
    f = trailing_means(cases, nu)
    raw = np.full(len(deaths), np.nan)
    ok = np.isfinite(f) & (f > 0)
    raw[ok] = deaths[ok] / f[ok]
    scope = raw if window is None else raw[window]
    if not np.isfinite(scope).any():
        raise SparseRegime(f"no days with positive {nu}-day case mass")
    tau = compute_tau(scope)
    lg = np.full(len(raw), np.nan)
    idx = np.arange(len(raw)) if window is None else np.asarray(window)
    lg[idx] = clamped_logit(raw[idx], tau)
    dates = np.arange(len(raw)) if dates is None else dates
    return GrowthSeries(dates=dates, raw=raw, logit=lg, tau=tau)


def gamma_forecast(trend_t, cand: DeathTuningCandidate):
    return np.clip(trend_t, cand.theta_lower, cand.theta_upper)


def expected_deaths(trend_t, cand: DeathTuningCandidate, case_mean):
    """Unrounded deaths: clipped CFR (natural scale) times the spliced case mean."""
    return expit(gamma_forecast(trend_t, cand)) * np.asarray(case_mean, dtype=float)


@dataclass(frozen=True)
class NuFit:
    nu: int
    cfr: GrowthSeries
    train_fit: RegressionFit
    trend_test: np.ndarray


@dataclass(frozen=True)
class DeathFit:
    T: int
    split: SplitWindows
    by_nu: dict
    posterior: TuningPosterior


def theta_pairs(train_logit, lower_q, upper_q) -> list[tuple[float, float]]:
    vals = train_logit[np.isfinite(train_logit)]
    lows = np.quantile(vals, lower_q)
    highs = np.quantile(vals, upper_q)
    pairs = []
    for lo in lows:
        for hi in highs:
            if hi <= lo:
                # flat CFR: the clamp is inactive anyway, keep a minimal interval
                hi = np.nextafter(lo, np.inf)
            pairs.append((float(lo), float(hi)))
    return list(dict.fromkeys(pairs))


def fit_death_tuning(series: RegionSeries, config: EngineConfig) -> DeathFit:
    n = len(series)
    if n < blend.WINDOW_DAYS:
        raise SparseRegime(f"{series.region_id}: fewer than {blend.WINDOW_DAYS} days of history")
    T = n - 1
    split = SplitWindows.ending_at(T)
    window = np.arange(T - blend.WINDOW_DAYS + 1, T + 1)
    dow = series.weekdays
    cands, dists, by_nu = [], [], {}
    for nu in config.nu_grid:
        try:
            g = cfr_series(series.daily_deaths, series.daily_cases, nu, series.dates, window)
        except SparseRegime as exc:
            log.debug("%s nu=%d skipped: %s", series.region_id, nu, exc)
            continue
        train = split.train[np.isfinite(g.logit[split.train])]
        test = split.test
        obs = g.raw[test]
        if len(train) < 10 or np.isnan(obs).sum() > 7:
            continue
        tfit = fit_dow_trend(train, dow[train], g.logit[train])
        trend_test = predict(tfit, test, dow[test])
        by_nu[nu] = NuFit(nu, g, tfit, trend_test)
        use = np.isfinite(obs)
        for lo, hi in theta_pairs(g.logit[train], config.theta_lower_quantiles, config.theta_upper_quantiles):
            cand = DeathTuningCandidate(nu, lo, hi)
            fc = expit(gamma_forecast(trend_test[use], cand))
            cands.append(cand)
            dists.append(float(np.sum((fc - obs[use]) ** 2)))
    if not cands:
        raise SparseRegime(f"{series.region_id}: no usable CFR window")
    post = blend.posterior_from_distances(cands, dists, config.distance_floor)
    return DeathFit(T=T, split=split, by_nu=by_nu, posterior=post)


def spliced_case_means(observed, case_samples, nu: int) -> np.ndarray:
    """Case moving average feeding deaths on forecast day k = 1..K.

    For ``k <= nu`` the window is the last ``nu`` observed days; after that it
    ends at ``T + k - nu`` and so holds ``k - nu`` forecast values.
    """
    observed = np.asarray(observed, dtype=float)
    S, K = case_samples.shape
    if len(observed) < nu:
        raise ValueError("not enough observed cases for the moving-average window")
    full = np.hstack([np.broadcast_to(observed[-nu:], (S, nu)), case_samples.astype(float)])
    c = np.hstack([np.zeros((S, 1)), np.cumsum(full, axis=1)])
    k = np.arange(1, K + 1)
    end = nu + np.maximum(k - nu, 0)  # exclusive end in `full` coordinates
    return (c[:, end] - c[:, end - nu]) / nu


def spliced_window_sources(nu: int, k: int) -> np.ndarray:
    """For an audit: True for each window slot filled by a forecast value."""
    n_fc = max(k - nu, 0)
    return np.arange(nu) >= nu - n_fc


def _sparse(series, config, regime, K, note=()):
    tail = series.daily_deaths[-TAIL_DAYS:]
    S = config.samples
    out = np.empty((S, K), dtype=np.int64)
    for s in range(S):
        out[s] = sample_sparse(regime, tail, derive_rng(config.seed, series.region_id, STREAM_DEATHS, s), K)
    return ForecastEnsemble(series.region_id, "deaths", series.last_date + np.arange(1, K + 1), out,
                            config.seed, regime, tuple(note))


def forecast_deaths(series: RegionSeries, cases: CaseForecast, config: EngineConfig, fit: DeathFit | None = None):
    """Deaths ensemble; death sample ``s`` is driven by case sample ``s``."""
    case_samples = cases.ensemble.samples
    S, K = case_samples.shape
    regime = classify_regime(series.daily_deaths[-TAIL_DAYS:])
    if regime != FULL:
        return _sparse(series, config, regime, K)
    try:
        fit = fit or fit_death_tuning(series, config)
    except SparseRegime as exc:
        log.info("%s: deaths fall back to empirical sampling (%s)", series.region_id, exc)
        return _sparse(series, config, SPARSE_EMPIRICAL, K, (str(exc),))

    T = fit.T
    dow = series.weekdays
    k = np.arange(1, K + 1)
    dow_fc = weekday_of(series.last_date + k)
    trend, means = {}, {}
    for nu, nf in fit.by_nu.items():
        recent = np.arange(T - TAIL_DAYS + 1, T + 1)
        recent = recent[np.isfinite(nf.cfr.logit[recent])]
        rfit = fit_dow_trend(recent, dow[recent], nf.cfr.logit[recent]) if len(recent) >= 10 else nf.train_fit
        trend[nu] = predict(rfit, T + k, dow_fc)
        means[nu] = spliced_case_means(series.daily_cases, case_samples, nu)

    out = np.empty((S, K), dtype=np.int64)
    post = fit.posterior
    for s in range(S):
        rng = derive_rng(config.seed, series.region_id, STREAM_DEATHS, s)
        cand = post.candidates[blend.sample_index(post, rng)]
        out[s] = np.floor(expected_deaths(trend[cand.nu], cand, means[cand.nu][s]) + 0.5).astype(np.int64)
    return ForecastEnsemble(series.region_id, "deaths", series.last_date + k, out, config.seed, FULL)
