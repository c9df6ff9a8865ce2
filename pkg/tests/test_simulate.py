import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from growthcast.simulate import (
    ALPHA_MIN, BERNOULLI_P, FULL, SPARSE_BERNOULLI, SPARSE_EMPIRICAL, SimulationState,
    classify_regime, derive_rng, estimate_dispersion, nb_loglik, nb_logpmf, nb_sample,
    sample_sparse, si_paths, si_step,
)


def test_regimes():
    assert classify_regime(np.zeros(28)) == SPARSE_BERNOULLI
    tail = np.zeros(28)
    tail[:8] = 3
    assert classify_regime(tail) == SPARSE_EMPIRICAL
    tail[:14] = 1
    assert classify_regime(tail) == FULL
    tail[:13] = 1
    tail[13] = 0
    assert classify_regime(tail) == SPARSE_EMPIRICAL
    with pytest.raises(ValueError):
        classify_regime(np.zeros(27))


def test_sparse_bernoulli_mean(rng):
    n = 1_000_000
    draws = sample_sparse(SPARSE_BERNOULLI, np.zeros(28), rng, n)
    sigma = np.sqrt(BERNOULLI_P * (1 - BERNOULLI_P) / n)
    assert abs(draws.mean() - BERNOULLI_P) < 3 * sigma
    assert set(np.unique(draws)) <= {0, 1}


def test_sparse_empirical_support(rng):
    tail = np.array([5] * 6 + [0] * 22)
    draws = sample_sparse(SPARSE_EMPIRICAL, tail, rng, 5000)
    assert set(np.unique(draws)) == {0, 5}
    assert sample_sparse(SPARSE_EMPIRICAL, tail, rng, 0).size == 0


def test_nb_logpmf_matches_scipy():
    y = np.arange(0, 400)
    for m, a in [(50, 2.0), (5, 0.01), (300, 4.0), (1.5, 0.5)]:
        ref = stats.nbinom.logpmf(y, m / a, 1 / (1 + a))
        np.testing.assert_allclose(nb_logpmf(y, m, a), ref, rtol=1e-10, atol=1e-10)


def test_nb_logpmf_poisson_limit():
    y = np.arange(0, 200)
    np.testing.assert_allclose(nb_logpmf(y, 40.0, 1e-9), stats.poisson.logpmf(y, 40.0), atol=1e-6)


def test_dispersion_poisson_data(rng):
    m = rng.uniform(5, 200, 1000)
    assert estimate_dispersion(rng.poisson(m), m).alpha_hat < 0.05


def test_dispersion_nb_data(rng):
    m = rng.uniform(5, 200, 1000)
    y = nb_sample(m, 4.0, rng)
    assert 3.2 < estimate_dispersion(y, m).alpha_hat < 4.8


def test_dispersion_degenerate():
    m = np.arange(1.0, 21.0)
    assert estimate_dispersion(m, m).alpha_hat == ALPHA_MIN


def test_dispersion_is_a_maximum(rng):
    m = rng.uniform(20, 80, 300)
    y = nb_sample(m, 1.5, rng)
    est = estimate_dispersion(y, m)
    a = est.alpha_hat
    for h in (1e-8, 1e-6, 1e-4):
        assert nb_loglik(a, y, m) >= nb_loglik(a + h, y, m) - 1e-9
        assert nb_loglik(a, y, m) >= nb_loglik(a - h, y, m) - 1e-9
    # independent golden-section oracle on the scipy likelihood
    f = lambda x: -stats.nbinom.logpmf(y, m / x, 1 / (1 + x)).sum()
    lo, hi = 0.01, 20.0
    g = (np.sqrt(5) - 1) / 2
    for _ in range(200):
        c, d = hi - g * (hi - lo), lo + g * (hi - lo)
        if f(c) < f(d):
            hi = d
        else:
            lo = c
    assert a == pytest.approx((lo + hi) / 2, abs=1e-6)


def test_dispersion_validation():
    with pytest.raises(ValueError):
        estimate_dispersion([1, 2, 3], [1, 2, 3])
    with pytest.raises(ValueError):
        estimate_dispersion(np.ones(10), np.zeros(10))


def test_nb_sample_moments(rng):
    n = 1_000_000
    x = nb_sample(np.full(n, 50.0), 2.0, rng)
    mean_sd = np.sqrt(150 / n)
    assert abs(x.mean() - 50) < 3 * mean_sd
    mu4 = stats.nbinom.stats(25.0, 1 / 3, moments="k") * 150**2 + 3 * 150**2
    var_sd = np.sqrt((mu4 - 150**2) / n)
    assert abs(x.var(ddof=1) - 150) < 3 * var_sd


def test_nb_sample_poisson_limit(rng):
    x = nb_sample(np.full(200_000, 30.0), 0.0, rng)
    assert x.var() == pytest.approx(30.0, rel=0.03)


def test_nb_sample_zero_mean(rng):
    assert nb_sample(0.0, 2.0, rng) == 0
    assert nb_sample(np.zeros(5), 2.0, rng).tolist() == [0] * 5


def test_si_step_examples():
    new, _ = si_step(SimulationState(1000.0, 5e5, 5e5), 0.1)
    assert new == pytest.approx(100.0)
    new, _ = si_step(SimulationState(1000.0, 2.5e5, 5e5), 0.1)
    assert new == pytest.approx(50.0)
    # 0.99 * 0.5 * 9000 = 4455 > 1000 susceptibles left
    new, nxt = si_step(SimulationState(9000.0, 1000.0, 2000.0), 0.99)
    assert new == 1000.0 and nxt.susceptible == 0.0 and nxt.cum_cases == 10000.0


@given(
    st.floats(1, 1e5), st.floats(1.5, 1e3), st.lists(st.floats(0.001, 0.999), min_size=1, max_size=40),
)
def test_si_conservation_and_monotonicity(cum0, ratio, rates):
    s0 = cum0 * ratio
    state = SimulationState(cum0, s0 - cum0, s0)
    for r in rates:
        new, nxt = si_step(state, r)
        assert nxt.cum_cases >= state.cum_cases
        assert nxt.susceptible <= state.susceptible
        assert 0 <= nxt.susceptible <= s0
        assert abs(nxt.cum_cases + nxt.susceptible - s0) <= 1e-9 * s0
        state = nxt


def test_vectorized_paths_match_scalar(rng):
    rates = rng.uniform(0.01, 0.3, size=(5, 20))
    s0 = rng.uniform(1e4, 1e5, 5)
    new, cum, sus = si_paths(rates, 500.0, s0)
    for s in range(5):
        st_ = SimulationState(500.0, s0[s] - 500.0, s0[s])
        for k in range(20):
            n_, st_ = si_step(st_, rates[s, k])
            assert new[s, k] == pytest.approx(n_, rel=1e-12)
            assert cum[s, k] == pytest.approx(st_.cum_cases, rel=1e-12)


def test_derived_streams_are_stable_and_distinct():
    a = derive_rng(1, "r", 0, 5).random(3)
    b = derive_rng(1, "r", 0, 5).random(3)
    c = derive_rng(1, "r", 0, 6).random(3)
    d = derive_rng(1, "q", 0, 5).random(3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
