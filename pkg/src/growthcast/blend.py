"""Trend/constant blend of logit growth rates and its grid posterior over (eta, omega, phi)."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

log = logging.getLogger(__name__)

TRAIN_DAYS = 28
TEST_DAYS = 14
WINDOW_DAYS = TRAIN_DAYS + TEST_DAYS
DAMPING_FLOOR = 1e-6
DISTANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class TuningCandidate:
    eta: float
    omega: float
    phi: float

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        if self.omega < 1:
            raise ValueError("omega must be >= 1")
        if self.phi <= 0:
            raise ValueError("phi must be > 0")


@dataclass(frozen=True)
class TuningPosterior:
    candidates: list
    probs: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        if len(self.candidates) != len(self.probs):
            raise ValueError("candidates and probs differ in length")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)


@dataclass(frozen=True)
class SplitWindows:
    """Index windows on a series whose last observed day is ``T``."""

    train: np.ndarray
    test: np.ndarray
    t_train_end: int

    @classmethod
    def ending_at(cls, T: int) -> "SplitWindows":
        if T < WINDOW_DAYS - 1:
            raise ValueError(f"need {WINDOW_DAYS} days of history")
        return cls(
            train=np.arange(T - 41, T - 13),
            test=np.arange(T - 13, T + 1),
            t_train_end=T - 14,
        )


def default_grid(etas, omegas, phis) -> list[TuningCandidate]:
    return [TuningCandidate(float(e), float(o), float(p)) for e, o, p in itertools.product(etas, omegas, phis)]


def transition_weight(k, omega):
    """Weight on the trend component ``k`` days after the anchor."""
    k = np.asarray(k, dtype=float)
    w = np.where(k <= omega + 1, 1.0 - ((k - 1.0) / omega) ** 2, 0.0)
    return float(w) if w.ndim == 0 else w


def damping(k, phi, floor: float = DAMPING_FLOOR):
    lam = np.maximum(1.0 + np.asarray(k, dtype=float) * (phi - 1.0) / 30.0, floor)
    return float(lam) if lam.ndim == 0 else lam


def eta_cap(train_logit_tail, eta: float) -> float:
    tail = np.asarray(train_logit_tail, dtype=float)
    if tail.shape != (7,):
        raise ValueError("eta cap uses exactly the last 7 training values")
    return float(np.median(tail)) * eta


def kappa_forecast(k, trend_k, constant_dow_k, cand: TuningCandidate, eta_star: float):
    w = transition_weight(k, cand.omega)
    lam = damping(k, cand.phi)
    return lam * (w * np.minimum(eta_star, trend_k) + (1.0 - w) * constant_dow_k)


def forecast_grid(k, trend, constant_dow, grid: list[TuningCandidate], median_tail: float) -> np.ndarray:
    """Blended forecasts for every candidate: shape ``(len(grid), len(k))``."""
    k = np.asarray(k, dtype=float)[None, :]
    eta = np.array([c.eta for c in grid])[:, None]
    omega = np.array([c.omega for c in grid])[:, None]
    phi = np.array([c.phi for c in grid])[:, None]
    w = np.where(k <= omega + 1, 1.0 - ((k - 1.0) / omega) ** 2, 0.0)
    lam = np.maximum(1.0 + k * (phi - 1.0) / 30.0, DAMPING_FLOOR)
    capped = np.minimum(median_tail * eta, np.asarray(trend)[None, :])
    return lam * (w * capped + (1.0 - w) * np.asarray(constant_dow)[None, :])


def posterior_from_distances(candidates, distances, floor: float = DISTANCE_FLOOR) -> TuningPosterior:
    """Normalized inverse distance; non-finite distances get probability 0."""
    d = np.asarray(distances, dtype=float)
    if d.size == 0:
        raise ValueError("empty tuning grid")
    ok = np.isfinite(d)
    if not ok.any():
        raise ValueError("no candidate produced a finite forecast")
    if not ok.all():
        log.debug("%d candidates with non-finite forecasts dropped", int((~ok).sum()))
    inv = np.zeros_like(d)
    inv[ok] = 1.0 / np.maximum(d[ok], floor)
    return TuningPosterior(list(candidates), inv / inv.sum(), d)


def fit_tuning_posterior(
    test_kappa_raw, trend, constant_dow, grid: list[TuningCandidate], median_tail: float
) -> TuningPosterior:
    """Grid posterior from squared error between inverse-logit forecasts and observed rates.

    ``trend`` and ``constant_dow`` are the two components evaluated on the 14
    test days (k = 1..14). Test days with an undefined observed rate (NaN) are
    left out of the distance.
    """
    obs = np.asarray(test_kappa_raw, dtype=float)
    k = np.arange(1, len(obs) + 1)
    fc = forecast_grid(k, trend, constant_dow, grid, median_tail)
    use = np.isfinite(obs)
    with np.errstate(invalid="ignore"):
        sq = (expit(fc[:, use]) - obs[use]) ** 2
    d = sq.sum(axis=1)
    d[~np.all(np.isfinite(fc[:, use]), axis=1)] = np.nan
    return posterior_from_distances(grid, d)


def sample_index(post: TuningPosterior, rng) -> int:
    u = rng.random()
    idx = int(np.searchsorted(post.cdf(), u, side="right"))
    if idx >= len(post.probs):
        # u fell in the rounding gap above the last cumulative value
        idx = int(np.flatnonzero(post.probs > 0)[-1])
    return idx


def sample_tuning(post: TuningPosterior, rng):
    return post.candidates[sample_index(post, rng)]
