"""Cook's-distance weighted trend + day-of-week regression with best-subset selection.

Coefficient layout: ``beta[0]`` intercept, ``beta[1]`` slope per day (time
centered at the last training day), ``beta[2:8]`` Monday..Saturday offsets.
Sunday is the reference level. Weekdays follow ``date.weekday()``
(Monday=0 .. Sunday=6).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .outliers import trend_weekday_design

MIN_POINTS = 10
TREND, DOW = "trend", "dow"
COLUMN_GROUPS = {0: "intercept", 1: TREND, **{c: DOW for c in range(2, 8)}}


@dataclass(frozen=True)
class RegressionFit:
    beta: np.ndarray
    included: dict
    weights: np.ndarray
    t0: float
    aic: dict = field(default_factory=dict, compare=False)


def _rss_floor(y: np.ndarray) -> float:
    # below this the residual variance is rounding noise
    return (1e-10 * max(1.0, float(np.max(np.abs(y))))) ** 2


def _wls(X, y, w):
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    resid = y - X @ beta
    return beta, float(np.sum(w * resid * resid))


def hat_diagonal(X: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(X)
    return np.sum(q * q, axis=1)


def cooks_distance(X, y) -> np.ndarray:
    """Cook's distance ``r^2 / (p s^2) * h / (1 - h)^2`` of each row of an OLS fit."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise ValueError("Cook's distance needs more rows than parameters")
    if np.linalg.matrix_rank(X) < p:
        raise ValueError("design is rank deficient")
    beta, rss = _wls(X, y, np.ones(n))
    s2 = rss / (n - p)
    if s2 <= _rss_floor(y):
        return np.zeros(n)
    r = y - X @ beta
    h = hat_diagonal(X)
    exact = h >= 1 - 1e-12
    d = np.empty(n)
    hh = h[~exact]
    d[~exact] = r[~exact] ** 2 / (p * s2) * hh / (1 - hh) ** 2
    if exact.any():
        d[exact] = d[~exact].max() if (~exact).any() else 0.0
    return d


def cook_weights(d) -> np.ndarray:
    """Inverse Cook's distance floored at median/100, renormalized to mean 1."""
    d = np.asarray(d, dtype=float)
    eps = np.median(d) / 100.0
    if eps <= 0:
        pos = d[d > 0]
        if pos.size == 0:
            return np.ones_like(d)
        eps = pos.min() / 100.0
    w = 1.0 / np.maximum(d, eps)
    return w / w.mean()


def _columns(trend: bool, dow: bool) -> list[int]:
    cols = [0]
    if trend:
        cols.append(1)
    if dow:
        cols.extend(range(2, 8))
    return cols


def fit_dow_trend(t, dow, y) -> RegressionFit:
    t = np.asarray(t, dtype=float)
    dow = np.asarray(dow)
    y = np.asarray(y, dtype=float)
    if len(y) < MIN_POINTS:
        raise ValueError(f"regression needs >= {MIN_POINTS} points, got {len(y)}")
    if np.unique(t).size < 2:
        raise ValueError("regression needs at least two distinct time points")
    t0 = float(t.max())
    X = trend_weekday_design(t - t0, dow)
    n = len(y)
    # weekdays absent from the data cannot be estimated
    present = np.flatnonzero(X.any(axis=0))

    Xa = X[:, present]
    try:
        w = cook_weights(cooks_distance(Xa, y))
    except ValueError:
        w = np.ones(n)

    floor = _rss_floor(y)
    aics = {}
    best = None
    for trend, use_dow in itertools.product((False, True), repeat=2):
        cols = [c for c in _columns(trend, use_dow) if c in present]
        Xs = X[:, cols]
        if np.linalg.matrix_rank(Xs) < len(cols) or len(cols) >= n:
            continue
        beta_s, wrss = _wls(Xs, y, w)
        aic = n * np.log(max(wrss / n, floor)) + 2 * len(cols)
        aics[(trend, use_dow)] = aic
        if best is None or aic < best[0] - 1e-9 * abs(best[0]):
            best = (aic, trend, use_dow, cols, beta_s)

    beta = np.zeros(8)
    if best is None:
        beta[0] = float(np.average(y, weights=w))
        included = {TREND: False, DOW: False}
    else:
        _, trend, use_dow, cols, beta_s = best
        beta[cols] = beta_s
        included = {TREND: trend, DOW: use_dow}
    return RegressionFit(beta=beta, included=included, weights=w, t0=t0, aic=aics)


def dow_offsets(fit: RegressionFit) -> np.ndarray:
    """Additive offset per weekday, Monday=0 .. Sunday=6 (Sunday always 0)."""
    out = np.zeros(7)
    if fit.included[DOW]:
        out[:6] = fit.beta[2:8]
    return out


def predict(fit: RegressionFit, t, dow):
    t = np.asarray(t, dtype=float)
    dow = np.asarray(dow, dtype=int)
    out = fit.beta[0] + fit.beta[1] * (t - fit.t0) + dow_offsets(fit)[dow]
    return float(out) if out.ndim == 0 else out
