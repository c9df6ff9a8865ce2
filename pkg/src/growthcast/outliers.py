"""Five-detector outlier vote and non-negative adjustment of daily counts.

The detectors are

1. Hampel filter (rolling median +/- k * 1.4826 * rolling MAD),
2. weekday-stratified robust z-score on ``log1p`` counts,
3. IQR fence on residuals from a centered moving average,
4. generalized ESD on the same residuals,
5. externally studentized residuals of an intercept + trend + weekday fit
   on ``log1p`` counts.

Detectors 1, 3 and 4 run on a weekday-normalized copy of the series so that
a stable reporting pattern (e.g. no reports on Sundays) is not itself an
outlier. Every scale estimate is floored at the Poisson noise level of the
local counts; without the floor a run of identical values gives MAD = 0 and
any +/-1 deviation would be flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .config import OutlierConfig

MAD_SCALE = 1.4826
IQR_SCALE = 1.349  # IQR of a unit normal
N_DETECTORS = 5


class InsufficientHistory(ValueError):
    pass


@dataclass(frozen=True)
class OutlierReport:
    original: np.ndarray
    votes: np.ndarray
    flags: np.ndarray
    adjusted: np.ndarray
    detector_flags: np.ndarray  # (5, n) boolean


def _windows(n: int, width: int):
    half = width // 2
    for i in range(n):
        yield i, max(0, i - half), min(n, i + half + 1)


def weekday_normalize(x: np.ndarray, dow: np.ndarray) -> np.ndarray:
    """Remove multiplicative weekday effects: shift each weekday's log1p median to the overall one."""
    lx = np.log1p(x)
    overall = np.median(lx)
    out = lx.copy()
    for d in range(7):
        mask = dow == d
        if mask.any():
            out[mask] -= np.median(lx[mask]) - overall
    return np.expm1(out)


def hampel_flags(x: np.ndarray, window: int = 15, nsigma: float = 3.0) -> np.ndarray:
    flags = np.zeros(len(x), dtype=bool)
    for i, lo, hi in _windows(len(x), window):
        w = x[lo:hi]
        med = np.median(w)
        sigma = max(MAD_SCALE * np.median(np.abs(w - med)), np.sqrt(1.0 + med))
        flags[i] = abs(x[i] - med) > nsigma * sigma
    return flags


def weekday_zscore_flags(x: np.ndarray, dow: np.ndarray, threshold: float = 3.5) -> np.ndarray:
    lx = np.log1p(x)
    flags = np.zeros(len(x), dtype=bool)
    for d in range(7):
        idx = np.flatnonzero(dow == d)
        if idx.size < 3:
            continue
        vals = lx[idx]
        med = np.median(vals)
        # log1p of Poisson(m) has sd ~ 1/sqrt(1+m)
        floor = 1.0 / np.sqrt(1.0 + np.expm1(med))
        sigma = max(MAD_SCALE * np.median(np.abs(vals - med)), floor)
        flags[idx] = np.abs(vals - med) / sigma > threshold
    return flags


def moving_average_residuals(x: np.ndarray, window: int = 7) -> np.ndarray:
    ma = np.array([x[lo:hi].mean() for _, lo, hi in _windows(len(x), window)])
    return x - ma


def iqr_flags(resid: np.ndarray, level: float, k: float = 3.0) -> np.ndarray:
    q1, q3 = np.percentile(resid, [25, 75])
    iqr = max(q3 - q1, IQR_SCALE * np.sqrt(1.0 + level))
    return (resid < q1 - k * iqr) | (resid > q3 + k * iqr)


def generalized_esd_flags(
    resid: np.ndarray, level: float, alpha: float = 0.05, max_frac: float = 0.10
) -> np.ndarray:
    """Rosner's generalized ESD test for up to ``max_frac`` of the points."""
    n = len(resid)
    r_max = int(np.floor(max_frac * n))
    flags = np.zeros(n, dtype=bool)
    if r_max < 1:
        return flags
    floor = np.sqrt(1.0 + level)
    remaining = np.arange(n)
    removed = []
    n_out = 0
    for i in range(1, r_max + 1):
        vals = resid[remaining]
        s = max(vals.std(ddof=1), floor)
        dev = np.abs(vals - vals.mean())
        j = int(np.argmax(dev))
        r_i = dev[j] / s
        p = 1 - alpha / (2 * (n - i + 1))
        t = stats.t.ppf(p, n - i - 1)
        lam = (n - i) * t / np.sqrt((n - i - 1 + t * t) * (n - i + 1))
        removed.append(remaining[j])
        remaining = np.delete(remaining, j)
        if r_i > lam:
            n_out = i
    flags[removed[:n_out]] = True
    return flags


def trend_weekday_design(t: np.ndarray, dow: np.ndarray) -> np.ndarray:
    """Columns: intercept, t, Monday..Saturday indicators (Sunday is the reference)."""
    X = np.zeros((len(t), 8))
    X[:, 0] = 1.0
    X[:, 1] = t
    for d in range(6):
        X[:, 2 + d] = dow == d
    return X


def studentized_flags(x: np.ndarray, dow: np.ndarray, threshold: float = 4.0) -> np.ndarray:
    y = np.log1p(x)
    X = trend_weekday_design(np.arange(len(x), dtype=float), dow)
    keep = X.any(axis=0)
    X = X[:, keep]
    n, p = X.shape
    if n - p - 1 < 1:
        return np.zeros(n, dtype=bool)
    q, _ = np.linalg.qr(X)
    h = np.sum(q * q, axis=1)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    e = y - X @ beta
    rss = float(e @ e)
    floor = 1.0 / np.sqrt(1.0 + np.median(x))
    flags = np.zeros(n, dtype=bool)
    for i in range(n):
        if h[i] >= 1 - 1e-12:
            continue
        s2 = max((rss - e[i] ** 2 / (1 - h[i])) / (n - p - 1), 0.0)
        s = max(np.sqrt(s2), floor)
        flags[i] = abs(e[i]) / (s * np.sqrt(1 - h[i])) > threshold
    return flags


def detector_flags(daily, dow, config: OutlierConfig | None = None) -> np.ndarray:
    cfg = config or OutlierConfig()
    x = np.asarray(daily, dtype=float)
    dow = np.asarray(dow)
    if len(x) < cfg.min_length:
        raise InsufficientHistory(f"outlier detection needs >= {cfg.min_length} days, got {len(x)}")
    xn = weekday_normalize(x, dow)
    level = float(np.median(xn))
    resid = moving_average_residuals(xn, cfg.iqr_window)
    return np.vstack([
        hampel_flags(xn, cfg.hampel_window, cfg.hampel_nsigma),
        weekday_zscore_flags(x, dow, cfg.zscore_threshold),
        iqr_flags(resid, level, cfg.iqr_k),
        generalized_esd_flags(resid, level, cfg.esd_alpha, cfg.esd_max_frac),
        studentized_flags(x, dow, cfg.studentized_threshold),
    ])


def detect_outliers(daily, dow, config: OutlierConfig | None = None) -> np.ndarray:
    """Number of detectors (0-5) flagging each index."""
    return detector_flags(daily, dow, config).sum(axis=0).astype(np.int64)


def replacement_values(daily, dow, flags, config: OutlierConfig | None = None) -> np.ndarray:
    """Same-weekday rolling median (+/- ``replace_weeks``) for every flagged index.

    Falls back to a plain centered rolling median when fewer than
    ``replace_min_points`` same-weekday neighbours are unflagged.
    """
    cfg = config or OutlierConfig()
    x = np.asarray(daily, dtype=float)
    n = len(x)
    out = x.copy()
    for i in np.flatnonzero(flags):
        nbrs = [i + 7 * k for k in range(-cfg.replace_weeks, cfg.replace_weeks + 1) if k != 0]
        nbrs = [j for j in nbrs if 0 <= j < n and not flags[j]]
        if len(nbrs) >= cfg.replace_min_points:
            out[i] = np.median(x[nbrs])
            continue
        half = cfg.fallback_window // 2
        lo, hi = max(0, i - half), min(n, i + half + 1)
        window = [j for j in range(lo, hi) if not flags[j]]
        out[i] = np.median(x[window]) if window else np.median(x[lo:hi])
    return out


def adjust_outliers(daily, votes, dow=None, config: OutlierConfig | None = None) -> OutlierReport:
    cfg = config or OutlierConfig()
    x = np.asarray(daily, dtype=np.int64)
    votes = np.asarray(votes, dtype=np.int64)
    if dow is None:
        dow = np.arange(len(x)) % 7
    flags = votes >= cfg.vote_threshold
    adjusted = x.copy()
    if flags.any():
        repl = replacement_values(x, np.asarray(dow), flags, cfg)
        adjusted[flags] = np.floor(np.maximum(repl[flags], 0.0) + 0.5).astype(np.int64)
    return OutlierReport(
        original=x, votes=votes, flags=flags, adjusted=adjusted,
        detector_flags=np.zeros((N_DETECTORS, len(x)), dtype=bool),
    )


def clean_series(daily, dow, config: OutlierConfig | None = None) -> OutlierReport:
    """Detect and adjust in one pass, keeping per-detector flags for inspection."""
    cfg = config or OutlierConfig()
    det = detector_flags(daily, dow, cfg)
    votes = det.sum(axis=0).astype(np.int64)
    report = adjust_outliers(daily, votes, dow, cfg)
    return OutlierReport(report.original, report.votes, report.flags, report.adjusted, det)
