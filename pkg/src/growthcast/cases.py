"""Reported-cases model: fit the tuning posterior on the last 42 days, then simulate."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import blend
from .blend import SplitWindows, TuningPosterior
from .config import EngineConfig
from .growth import (
    SparseRegime, aligned_growth_rate, average_last_week, clamped_logit, compute_tau, expit,
)
from .ingest import RegionSeries, weekday_of
from .regress import RegressionFit, dow_offsets, fit_dow_trend, predict
from .simulate import (
    FULL, SPARSE_EMPIRICAL, STREAM_CASES, TAIL_DAYS, ForecastEnsemble, centered_moving_average,
    classify_regime, derive_rng, estimate_dispersion, nb_sample, sample_sparse, si_paths,
)

log = logging.getLogger(__name__)


class AttackRateExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class CaseFit:
    """Fitted growth-rate model for one region (kept for plot data and dumps)."""

    T: int
    tau: float
    kappa: np.ndarray  # raw growth rate aligned to the series, NaN where undefined
    kappa_logit: np.ndarray  # clamped logit on the 42-day window, NaN elsewhere
    split: SplitWindows
    train_fit: RegressionFit
    trend_test: np.ndarray
    constant_test: np.ndarray
    median_tail: float
    ybar: float
    posterior: TuningPosterior


@dataclass(frozen=True)
class CaseForecast:
    ensemble: ForecastEnsemble
    expected: np.ndarray  # (S, K) underlying daily cases; equal to samples in sparse regimes
    rates: np.ndarray | None  # (S, K) inverse-logit growth rates
    cum: np.ndarray | None
    susceptible: np.ndarray | None
    s0: np.ndarray | None
    alpha: float | None
    fit: CaseFit | None


def constant_rates(ybar: float, cum_prev, delta_s0: float, tau: float) -> np.ndarray:
    """Constant-cases logit rates, upper-clamped where the susceptible pool is used up.

    Days with a zero previous cumulative count are NaN.
    """
    cum_prev = np.asarray(cum_prev, dtype=float)
    out = np.full(cum_prev.shape, np.nan)
    ok = cum_prev > 0
    left = np.clip(delta_s0 - cum_prev[ok], 0.0, None)
    with np.errstate(divide="ignore"):
        rate = ybar / ((left / delta_s0) * cum_prev[ok])
    out[ok] = clamped_logit(np.nan_to_num(rate, posinf=1.0), tau)
    return out


def fit_case_model(series: RegionSeries, config: EngineConfig) -> CaseFit:
    """Growth rates, train/test split, trend fit and the (eta, omega, phi) posterior.

    Raises :class:`SparseRegime` when the recent growth-rate history cannot
    support a fit.
    """
    n = len(series)
    if n < blend.WINDOW_DAYS:
        raise SparseRegime(f"{series.region_id}: fewer than {blend.WINDOW_DAYS} days of history")
    T = n - 1
    dow = series.weekdays
    cum = series.cum_cases.astype(float)
    daily = series.daily_cases.astype(float)

    kappa = aligned_growth_rate(cum)
    window = np.arange(T - blend.WINDOW_DAYS + 1, T + 1)
    tau = compute_tau(kappa[window])
    kstar = np.full(n, np.nan)
    kstar[window] = clamped_logit(kappa[window], tau)

    split = SplitWindows.ending_at(T)
    train = split.train[np.isfinite(kstar[split.train])]
    if len(train) < 10:
        raise SparseRegime(f"{series.region_id}: only {len(train)} training growth rates")
    tfit = fit_dow_trend(train, dow[train], kstar[train])

    test = split.test
    if np.isnan(kappa[test]).sum() > 7:
        raise SparseRegime(f"{series.region_id}: more than 7 undefined test-window growth rates")
    tt = split.t_train_end
    trend_test = predict(tfit, test, dow[test])
    ybar = average_last_week(daily, tt)
    delta_s0 = config.attack_rate_nominal * series.population
    constant_test = constant_rates(ybar, cum[test - 1], delta_s0, tau) + dow_offsets(tfit)[dow[test]]

    median_tail = float(np.nanmedian(kstar[tt - 6: tt + 1])) if np.isfinite(kstar[tt - 6: tt + 1]).any() else np.nan
    if not np.isfinite(median_tail):
        raise SparseRegime(f"{series.region_id}: no growth rates in the last training week")

    grid = blend.default_grid(config.eta_grid, config.omega_grid, config.phi_grid)
    post = blend.fit_tuning_posterior(kappa[test], trend_test, constant_test, grid, median_tail)
    return CaseFit(
        T=T, tau=tau, kappa=kappa, kappa_logit=kstar, split=split, train_fit=tfit,
        trend_test=trend_test, constant_test=constant_test, median_tail=median_tail,
        ybar=ybar, posterior=post,
    )


def forecast_components(series: RegionSeries, fit: CaseFit, config: EngineConfig, K: int):
    """Trend and constant+DOW logit rates for days T+1..T+K, refit on the last 28 days."""
    T = fit.T
    dow = series.weekdays
    recent = np.arange(T - TAIL_DAYS + 1, T + 1)
    recent = recent[np.isfinite(fit.kappa_logit[recent])]
    # too few defined rates in the last four weeks: keep the training fit
    rfit = fit_dow_trend(recent, dow[recent], fit.kappa_logit[recent]) if len(recent) >= 10 else fit.train_fit
    k = np.arange(1, K + 1)
    dow_fc = weekday_of(series.last_date + k)
    trend = predict(rfit, T + k, dow_fc)
    ybar = average_last_week(series.daily_cases, T)
    cum_proj = float(series.cum_cases[-1]) + (k - 1) * ybar
    delta_s0 = config.attack_rate_nominal * series.population
    constant = constant_rates(ybar, cum_proj, delta_s0, fit.tau) + dow_offsets(rfit)[dow_fc]
    tail = fit.kappa_logit[T - 6: T + 1]
    median_tail = float(np.nanmedian(tail)) if np.isfinite(tail).any() else fit.median_tail
    return rfit, trend, constant, median_tail


def dispersion_for(series: RegionSeries, config: EngineConfig):
    daily = series.daily_cases.astype(float)
    means = np.maximum(centered_moving_average(daily, config.dispersion_mean_window), config.dispersion_mean_floor)
    w = min(config.dispersion_window, len(daily))
    window = np.arange(len(daily) - w, len(daily))
    return estimate_dispersion(daily[window], means[window], window)


def _draw_s0(rng, config: EngineConfig, population: int, cum_T: float) -> float:
    for _ in range(config.attack_rate_retries):
        p = rng.uniform(config.attack_rate_lower, config.attack_rate_upper)
        if p * population > cum_T:
            return p * population
    raise AttackRateExhausted(
        f"observed cumulative cases {cum_T:g} exceed every drawn susceptible pool "
        f"after {config.attack_rate_retries} attempts"
    )


def sparse_case_forecast(series, config, regime, K, note=()) -> CaseForecast:
    tail = series.daily_cases[-TAIL_DAYS:]
    S = config.samples
    samples = np.empty((S, K), dtype=np.int64)
    for s in range(S):
        samples[s] = sample_sparse(regime, tail, derive_rng(config.seed, series.region_id, STREAM_CASES, s), K)
    ens = ForecastEnsemble(
        region_id=series.region_id, kind="cases", target_dates=series.last_date + np.arange(1, K + 1),
        samples=samples, seed=config.seed, regime=regime, notes=tuple(note),
    )
    return CaseForecast(ens, samples.astype(float), None, None, None, None, None, None)


def forecast_cases(series: RegionSeries, config: EngineConfig, K: int | None = None) -> CaseForecast:
    """Reported-cases ensemble for an outlier-adjusted series.

    Per-sample generators come from ``(config.seed, region, sample index)``,
    so the result does not depend on evaluation order.
    """
    K = config.horizon if K is None else K
    if len(series) < TAIL_DAYS:
        raise ValueError(f"{series.region_id}: need at least {TAIL_DAYS} days of history")
    regime = classify_regime(series.daily_cases[-TAIL_DAYS:])
    if regime != FULL:
        return sparse_case_forecast(series, config, regime, K)
    try:
        fit = fit_case_model(series, config)
    except SparseRegime as exc:
        log.info("%s: falling back to empirical sampling (%s)", series.region_id, exc)
        return sparse_case_forecast(series, config, SPARSE_EMPIRICAL, K, note=(str(exc),))

    _, trend, constant, median_tail = forecast_components(series, fit, config, K)
    post = fit.posterior
    k = np.arange(1, K + 1)
    paths = blend.forecast_grid(k, trend, constant, post.candidates, median_tail)
    alpha = dispersion_for(series, config).alpha_hat
    cum_T = float(series.cum_cases[-1])

    S = config.samples
    rngs = [derive_rng(config.seed, series.region_id, STREAM_CASES, s) for s in range(S)]
    choice = np.empty(S, dtype=np.int64)
    s0 = np.empty(S)
    for s, rng in enumerate(rngs):
        choice[s] = blend.sample_index(post, rng)
        s0[s] = _draw_s0(rng, config, series.population, cum_T)
    rates = expit(paths[choice])
    new, cum, sus = si_paths(rates, cum_T, s0)
    samples = np.empty((S, K), dtype=np.int64)
    for s, rng in enumerate(rngs):
        samples[s] = nb_sample(new[s], alpha, rng)
    ens = ForecastEnsemble(
        region_id=series.region_id, kind="cases", target_dates=series.last_date + k,
        samples=samples, seed=config.seed, regime=FULL,
    )
    return CaseForecast(ens, new, rates, cum, sus, s0, alpha, fit)


__all__ = [
    "CaseFit", "CaseForecast", "AttackRateExhausted", "fit_case_model", "forecast_cases",
    "forecast_components", "constant_rates", "dispersion_for",
]
