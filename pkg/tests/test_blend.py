import numpy as np
import pytest
from hypothesis import given, strategies as st

from growthcast.blend import (
    SplitWindows, TuningCandidate, TuningPosterior, damping, default_grid, eta_cap,
    fit_tuning_posterior, forecast_grid, kappa_forecast, posterior_from_distances,
    sample_tuning, transition_weight,
)
from oracles import blend_step_by_step

C = TuningCandidate


@pytest.mark.parametrize("omega", [1.0, 2.5, 7.0, 28.0])
def test_weight_endpoints(omega):
    assert transition_weight(1, omega) == 1.0
    assert transition_weight(omega + 1, omega) == 0.0


def test_weight_value():
    assert transition_weight(4, 7) == pytest.approx(40 / 49, rel=1e-15)


@given(st.floats(1, 50), st.integers(1, 60))
def test_weight_non_increasing(omega, k):
    w = transition_weight(np.arange(1, k + 2), omega)
    assert np.all(np.diff(w) <= 1e-15)
    assert np.all((w >= 0) & (w <= 1))


@pytest.mark.parametrize("k,phi,expected", [(7, 1.0, 1.0), (30, 1.5, 1.5), (30, 0.7, 0.7), (0, 1.9, 1.0)])
def test_damping(k, phi, expected):
    assert damping(k, phi) == pytest.approx(expected, rel=1e-15)


def test_damping_floor():
    assert damping(100, 0.01) == 1e-6


def test_eta_cap():
    assert eta_cap([-2.0] * 7, 0.5) == -1.0
    assert eta_cap([-3, -1, -2, -5, -2, -4, 0], 0.0) == 0.0
    assert eta_cap([-1.7] * 7, 1.0) == -1.7
    with pytest.raises(ValueError):
        eta_cap([1, 2, 3], 0.5)


def test_kappa_forecast_endpoints():
    cand = C(0.5, 3.0, 1.0)
    assert kappa_forecast(1, -1.0, -3.0, cand, -0.5) == -1.0
    assert kappa_forecast(1, 0.2, -3.0, cand, -0.5) == -0.5
    assert kappa_forecast(5, -1.0, -3.0, cand, -0.5) == -3.0


def test_kappa_forecast_hand_value():
    # k=4, omega=7 -> w = 40/49; phi=1.3 -> lambda = 1 + 4 * 0.3 / 30 = 1.04
    got = kappa_forecast(4, -1.0, -3.0, C(0.5, 7.0, 1.3), 0.0)
    assert got == pytest.approx(1.04 * (-67 / 49), rel=1e-14)


def test_vectorized_grid_matches_scalar():
    grid = default_grid((0.2, 1.0), (1, 7, 21), (0.6, 1.0, 1.6))
    k = np.arange(1, 15)
    trend = np.linspace(-2, -1, 14)
    const = np.linspace(-3, -2.5, 14)
    fc = forecast_grid(k, trend, const, grid, -1.8)
    for i, c in enumerate(grid):
        expected = [kappa_forecast(kk, tr, co, c, -1.8 * c.eta) for kk, tr, co in zip(k, trend, const)]
        np.testing.assert_allclose(fc[i], expected, rtol=1e-15)


@given(
    st.integers(1, 40), st.floats(0, 1), st.floats(1, 30), st.floats(0.1, 3),
    st.floats(-8, 3), st.floats(-8, 3), st.floats(-6, 0),
)
def test_blend_matches_step_by_step(k, eta, omega, phi, trend, const, med):
    got = kappa_forecast(k, trend, const, C(eta, omega, phi), med * eta)
    lam = 1 + k * (phi - 1) / 30
    if lam < 1e-6:
        return
    assert got == pytest.approx(blend_step_by_step(k, trend, const, eta, omega, phi, med), rel=1e-12, abs=1e-12)


def test_candidate_ranges():
    with pytest.raises(ValueError):
        C(1.1, 2, 1)
    with pytest.raises(ValueError):
        C(0.5, 0.5, 1)
    with pytest.raises(ValueError):
        C(0.5, 2, 0)


def test_posterior_examples():
    grid = [C(0.1, 1, 1), C(0.2, 1, 1), C(0.3, 1, 1)]
    p = posterior_from_distances(grid[:1], [0.3])
    assert p.probs.tolist() == [1.0]
    p = posterior_from_distances(grid[:2], [0.7, 0.7])
    assert p.probs.tolist() == [0.5, 0.5]
    p = posterior_from_distances(grid, [1.0, 2.0, 4.0])
    assert p.probs.tolist() == [4 / 7, 2 / 7, 1 / 7]


@given(st.lists(st.floats(1e-6, 1e3), min_size=2, max_size=50), st.integers(0, 49), st.floats(0.1, 0.9))
def test_posterior_normalized_and_ordered(dists, i, shrink):
    grid = [C(0.5, 1, 1)] * len(dists)
    p0 = posterior_from_distances(grid, dists)
    assert abs(p0.probs.sum() - 1) <= 1e-12
    i %= len(dists)
    d = np.array(dists)
    d[i] *= shrink
    p1 = posterior_from_distances(grid, d)
    assert p1.probs[i] > p0.probs[i]
    order = np.argsort(d)
    assert np.all(np.diff(p1.probs[order]) <= 1e-15)


def test_zero_distance_guard():
    p = posterior_from_distances([C(0.5, 1, 1), C(0.6, 1, 1)], [0.0, 1.0])
    assert p.probs[0] == pytest.approx(1 / (1 + 1e-12))


def test_non_finite_candidate_gets_zero():
    p = posterior_from_distances([C(0.5, 1, 1), C(0.6, 1, 1)], [np.nan, 2.0])
    assert p.probs.tolist() == [0.0, 1.0]


def test_fit_posterior_prefers_matching_candidate():
    grid = default_grid((0.5,), (1.0, 14.0), (1.0,))
    k = np.arange(1, 15)
    trend = np.full(14, -3.0)
    const = np.full(14, -1.0)
    # observed rates follow the constant component -> fast transition should win
    obs = 1 / (1 + np.exp(1.0)) * np.ones(14)
    post = fit_tuning_posterior(obs, trend, const, grid, -2.0)
    assert post.probs[0] > post.probs[1]
    obs_nan = obs.copy()
    obs_nan[:3] = np.nan
    post2 = fit_tuning_posterior(obs_nan, trend, const, grid, -2.0)
    assert np.isfinite(post2.distances).all()


def test_sample_tuning_degenerate(rng):
    a, b = C(0.1, 1, 1), C(0.9, 2, 1.2)
    single = TuningPosterior([a], np.array([1.0]), np.array([1.0]))
    assert sample_tuning(single, rng) == a
    two = TuningPosterior([a, b], np.array([1.0, 0.0]), np.array([1.0, np.inf]))
    assert all(sample_tuning(two, rng) == a for _ in range(1000))


def test_sample_tuning_frequencies(rng):
    grid = [C(0.1, 1, 1), C(0.2, 1, 1), C(0.3, 1, 1)]
    post = posterior_from_distances(grid, [1.0, 2.0, 4.0])
    n = 100_000
    draws = [sample_tuning(post, rng).eta for _ in range(n)]
    counts = np.array([draws.count(c.eta) for c in grid])
    sigma = np.sqrt(n * post.probs * (1 - post.probs))
    assert np.all(np.abs(counts - n * post.probs) < 3 * sigma)


def test_default_grid_size():
    from growthcast.config import EngineConfig

    cfg = EngineConfig()
    assert len(default_grid(cfg.eta_grid, cfg.omega_grid, cfg.phi_grid)) == 810


def test_split_windows():
    s = SplitWindows.ending_at(100)
    assert len(s.train) == 28 and len(s.test) == 14
    assert s.train[0] == 59 and s.train[-1] == 86 == s.t_train_end
    assert s.test[0] == 87 and s.test[-1] == 100
    with pytest.raises(ValueError):
        SplitWindows.ending_at(40)
