"""Empirical growth rates, clamped logit transform and the constant-cases trajectory."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

__all__ = [
    "SparseRegime", "GrowthSeries", "empirical_growth_rate", "aligned_growth_rate",
    "compute_tau", "clamped_logit", "kappa_constant", "average_last_week", "expit", "logit",
]


class SparseRegime(Exception):
    """Not enough non-zero history for the growth-rate pipeline."""


@dataclass(frozen=True)
class GrowthSeries:
    dates: np.ndarray
    raw: np.ndarray  # NaN where undefined
    logit: np.ndarray
    tau: float


def aligned_growth_rate(cum) -> np.ndarray:
    """Growth rate per index, NaN where the previous cumulative count is zero (and at index 0)."""
    cum = np.asarray(cum, dtype=float)
    out = np.full(len(cum), np.nan)
    prev = cum[:-1]
    ok = prev > 0
    out[1:][ok] = cum[1:][ok] / prev[ok] - 1.0
    return out


def empirical_growth_rate(cum) -> np.ndarray:
    """``cum[t] / cum[t-1] - 1`` from the first day after the cumulative count turns positive."""
    rate = aligned_growth_rate(cum)
    rate = rate[~np.isnan(rate)]
    if rate.size == 0:
        raise SparseRegime("cumulative count never positive before the last day")
    return rate


def compute_tau(raw) -> float:
    raw = np.asarray(raw, dtype=float)
    pos = raw[np.isfinite(raw) & (raw > 0)]
    if pos.size == 0:
        raise SparseRegime("no strictly positive rates to set the clamp threshold")
    tau = 0.95 * float(pos.min())
    if not tau < 0.5:
        # [tau, 1 - tau] would be empty: every rate is enormous, no usable fit
        raise SparseRegime(f"clamp threshold {tau:g} leaves no interval; smallest positive rate too large")
    return tau


def clamped_logit(raw, tau: float):
    """logit of ``raw`` clamped into ``[tau, 1 - tau]``; NaN stays NaN."""
    if not 0 < tau < 0.5:
        raise ValueError(f"tau must lie in (0, 0.5), got {tau}")
    return logit(np.clip(raw, tau, 1.0 - tau))


def kappa_constant(ybar, cum_prev, delta_s0, tau):
    """Logit-scale rate that turns ``cum_prev`` into exactly ``ybar`` new cases in one SI step."""
    cum_prev = np.asarray(cum_prev, dtype=float)
    if np.any(cum_prev >= delta_s0):
        raise ValueError("cumulative count has reached the susceptible pool; attack rate exhausted")
    if np.any(cum_prev <= 0):
        raise ValueError("constant-cases rate needs a positive cumulative count")
    rate = ybar / (((delta_s0 - cum_prev) / delta_s0) * cum_prev)
    out = clamped_logit(rate, tau)
    return float(out) if out.ndim == 0 else out


def average_last_week(daily, anchor: int) -> float:
    if anchor < 6:
        raise ValueError("need 7 days ending at the anchor")
    daily = np.asarray(daily, dtype=float)
    return float(daily[anchor - 6: anchor + 1].mean())
