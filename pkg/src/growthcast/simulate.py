"""Simulation primitives: regime rules, SI recursion, negative-binomial noise."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

FULL = "full"
SPARSE_EMPIRICAL = "sparse-empirical"
SPARSE_BERNOULLI = "sparse-bernoulli"
TAIL_DAYS = 28
BERNOULLI_P = 1.0 / 29.0
ALPHA_MIN = 1e-8
ALPHA_MAX = 1e4

STREAM_CASES = 0
STREAM_DEATHS = 1
STREAM_TRUTH = 2


def region_key(region_id: str) -> int:
    # stable across processes, unlike hash()
    return int.from_bytes(hashlib.sha256(region_id.encode("utf-8")).digest()[:8], "little")


def derive_rng(seed: int, region_id: str, stream: int, index: int) -> np.random.Generator:
    """Independent generator for one (region, stream, sample) triple."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(region_key(region_id), stream, index))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class ForecastEnsemble:
    region_id: str
    kind: str
    target_dates: np.ndarray
    samples: np.ndarray  # (S, K) non-negative integers
    seed: int
    regime: str = FULL
    notes: tuple = field(default=(), compare=False)

    @property
    def horizon(self) -> int:
        return self.samples.shape[1]


def classify_regime(tail) -> str:
    tail = np.asarray(tail)
    if tail.shape != (TAIL_DAYS,):
        raise ValueError(f"regime classification needs exactly {TAIL_DAYS} days")
    nonzero = int(np.count_nonzero(tail))
    if nonzero == 0:
        return SPARSE_BERNOULLI
    if nonzero >= 14:
        return FULL
    return SPARSE_EMPIRICAL


def sample_sparse(regime: str, tail, rng: np.random.Generator, K: int) -> np.ndarray:
    if regime == SPARSE_BERNOULLI:
        return (rng.random(K) < BERNOULLI_P).astype(np.int64)
    if regime == SPARSE_EMPIRICAL:
        tail = np.asarray(tail, dtype=np.int64)
        return tail[rng.integers(0, len(tail), size=K)]
    raise ValueError(f"{regime!r} is not a sparse regime")


def _lgamma_ratio(y: np.ndarray, r: np.ndarray) -> np.ndarray:
    """``lgamma(y + r) - lgamma(r)`` without cancellation when ``r`` is huge."""
    out = np.empty(np.broadcast(y, r).shape)
    y, r = np.broadcast_arrays(y, r)
    small = r < 1e5
    out[small] = gammaln(y[small] + r[small]) - gammaln(r[small])
    if (~small).any():
        yy, rr = y[~small], r[~small]
        # Stirling: lgamma(x) = (x - 1/2) ln x - x + ln(2 pi)/2 + 1/(12 x) + O(x^-3)
        out[~small] = (
            (rr - 0.5) * np.log1p(yy / rr) + yy * np.log(rr + yy) - yy
            + 1.0 / (12.0 * (rr + yy)) - 1.0 / (12.0 * rr)
        )
    return out


def nb_logpmf(y, mean, alpha: float) -> np.ndarray:
    """log NB(y; mean, size = mean / alpha), variance ``mean * (1 + alpha)``."""
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    size = mean / alpha
    return (
        _lgamma_ratio(y, size) - gammaln(y + 1.0)
        - size * np.log1p(alpha)
        + y * (np.log(alpha) - np.log1p(alpha))
    )


def nb_loglik(alpha: float, y, mean) -> float:
    return float(np.sum(nb_logpmf(y, mean, alpha)))


@dataclass(frozen=True)
class DispersionEstimate:
    alpha_hat: float
    loglik: float
    window: np.ndarray


def estimate_dispersion(observed, means, window=None) -> DispersionEstimate:
    """Maximum-likelihood NB overdispersion on ``[1e-8, 1e4]`` (Brent on log alpha)."""
    y = np.asarray(observed, dtype=float)
    m = np.asarray(means, dtype=float)
    if y.shape != m.shape:
        raise ValueError("observed and means differ in shape")
    if len(y) < 8:
        raise ValueError("dispersion fit needs >= 8 points")
    if np.any(m <= 0):
        raise ValueError("means must be positive")
    window = np.arange(len(y)) if window is None else np.asarray(window)

    def nll(log_a):
        return -nb_loglik(math.exp(log_a), y, m)

    lo, hi = math.log(ALPHA_MIN), math.log(ALPHA_MAX)
    grid = np.linspace(lo, hi, 61)
    vals = np.array([nll(g) for g in grid])
    i = int(np.argmin(vals))
    best_x, best_v = grid[i], vals[i]
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if b > a:
        res = minimize_scalar(nll, bounds=(a, b), method="bounded", options={"xatol": 1e-11, "maxiter": 500})
        if res.fun < best_v:
            best_x, best_v = float(res.x), float(res.fun)
    # Poisson limit: the likelihood is flat to rounding near the lower bound
    if nll(lo) <= best_v + 1e-12 * max(1.0, abs(best_v)):
        best_x, best_v = lo, nll(lo)
    alpha = ALPHA_MIN if best_x == lo else min(max(math.exp(best_x), ALPHA_MIN), ALPHA_MAX)
    return DispersionEstimate(alpha_hat=alpha, loglik=-best_v, window=window)


def nb_sample(mean, alpha: float, rng: np.random.Generator):
    """Gamma-Poisson draw with the given mean and variance ``mean * (1 + alpha)``.

    Accepts a scalar or an array of means; zero means give zero.
    """
    mean = np.asarray(mean, dtype=float)
    out = np.zeros(mean.shape, dtype=np.int64)
    pos = mean > 0
    if pos.any():
        mu = mean[pos]
        if alpha <= ALPHA_MIN:
            out[pos] = rng.poisson(mu)
        else:
            out[pos] = rng.poisson(rng.gamma(mu / alpha, alpha))
    return int(out) if out.ndim == 0 else out


@dataclass
class SimulationState:
    cum_cases: float
    susceptible: float
    s0: float
    day: int = 0

    def __post_init__(self):
        if self.susceptible < 0:
            raise ValueError("susceptible population must be non-negative")


def si_step(state: SimulationState, rate: float) -> tuple[float, SimulationState]:
    """One day of the SI recursion; new cases never exceed the remaining susceptibles."""
    new = rate * (state.susceptible / state.s0) * state.cum_cases
    new = min(new, state.susceptible)
    nxt = SimulationState(
        cum_cases=state.cum_cases + new,
        susceptible=state.susceptible - new,
        s0=state.s0,
        day=state.day + 1,
    )
    return new, nxt


def si_paths(rates: np.ndarray, cum0: float, s0: np.ndarray):
    """Vectorized SI recursion over samples.

    ``rates`` is ``(S, K)``, ``s0`` is ``(S,)``. Returns ``(new, cum, susceptible)``
    each of shape ``(S, K)`` holding end-of-day values.
    """
    S, K = rates.shape
    cum = np.full(S, float(cum0))
    sus = s0 - cum0
    new_out = np.empty((S, K))
    cum_out = np.empty((S, K))
    sus_out = np.empty((S, K))
    for k in range(K):
        new = np.minimum(rates[:, k] * (sus / s0) * cum, sus)
        cum = cum + new
        sus = sus - new
        new_out[:, k], cum_out[:, k], sus_out[:, k] = new, cum, sus
    return new_out, cum_out, sus_out


def centered_moving_average(x, window: int = 7) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    half = window // 2
    n = len(x)
    c = np.concatenate([[0.0], np.cumsum(x)])
    lo = np.maximum(np.arange(n) - half, 0)
    hi = np.minimum(np.arange(n) + half + 1, n)
    return (c[hi] - c[lo]) / (hi - lo)
