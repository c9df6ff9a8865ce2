import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from growthcast.blend import posterior_from_distances
from growthcast.cases import forecast_cases
from growthcast.config import EngineConfig
from growthcast.deaths import (
    DeathTuningCandidate, cfr_series, expected_deaths, fit_death_tuning, forecast_deaths,
    gamma_forecast, moving_average, spliced_case_means, spliced_window_sources, theta_pairs,
)
from growthcast.growth import SparseRegime, expit, logit
from growthcast.ingest import RegionSeries
from growthcast.simulate import FULL, SPARSE_BERNOULLI
from growthcast.synthetic import synthetic_region

CFG = EngineConfig(samples=100)
D = DeathTuningCandidate


def test_moving_average():
    assert moving_average([5.0] * 10, 7, 9) == 5.0
    assert moving_average([3, 1, 4, 1, 5], 1, 2) == 4.0
    assert moving_average(np.arange(1, 8), 7, 6) == 4.0
    with pytest.raises(ValueError):
        moving_average(np.arange(10), 7, 5)


def test_cfr_zero_deaths_are_lower_clamp():
    deaths = np.zeros(30)
    deaths[-1] = 1
    g = cfr_series(deaths, np.full(30, 50), 7)
    assert g.tau == pytest.approx(0.95 / 50)
    assert np.all(g.raw[6:-1] == 0)
    np.testing.assert_allclose(g.logit[6:-1], logit(g.tau))


def test_cfr_all_zero_deaths_has_no_threshold():
    # the clamp threshold is a minimum over positive ratios, so there is none
    with pytest.raises(SparseRegime):
        cfr_series(np.zeros(30), np.full(30, 50), 7)


def test_cfr_constant_ratio():
    g = cfr_series(np.full(30, 2), np.full(30, 200), 14)
    np.testing.assert_allclose(g.raw[13:], 0.01, rtol=1e-15)
    assert np.isnan(g.raw[:13]).all()


def test_cfr_spike_is_upper_clamp():
    deaths = np.full(30, 1)
    deaths[-1] = 500
    g = cfr_series(deaths, np.full(30, 100), 7)
    assert g.logit[-1] == pytest.approx(logit(1 - g.tau))


def test_cfr_no_case_mass():
    with pytest.raises(SparseRegime):
        cfr_series(np.zeros(20), np.zeros(20), 7)


def test_gamma_clip():
    c = D(7, -5.0, -3.0)
    assert gamma_forecast(-4.0, c) == -4.0
    assert gamma_forecast(-9.0, c) == -5.0
    assert gamma_forecast(-1.0, c) == -3.0


def test_candidate_validation():
    with pytest.raises(ValueError):
        D(10, -5, -3)
    with pytest.raises(ValueError):
        D(7, -3, -3)


def test_death_posterior_examples():
    cands = [D(7, -5, -3), D(14, -5, -3)]
    assert posterior_from_distances(cands, [1.0, 3.0]).probs.tolist() == [0.75, 0.25]
    assert posterior_from_distances(cands, [2.0, 2.0]).probs.tolist() == [0.5, 0.5]
    assert posterior_from_distances(cands[:1], [9.0]).probs.tolist() == [1.0]


def test_theta_pairs_from_quantiles():
    vals = np.linspace(-6, -2, 101)
    pairs = theta_pairs(vals, (0.05, 0.1, 0.25), (0.75, 0.9, 0.95))
    assert len(pairs) == 9
    assert pairs[0] == pytest.approx((-5.8, -3.0))
    assert all(lo < hi for lo, hi in pairs)
    flat = theta_pairs(np.full(20, -4.0), (0.05,), (0.95,))
    assert flat[0][0] == -4.0 and flat[0][1] > -4.0


def test_constant_cases_closed_form():
    c = 340.0
    rng = np.random.default_rng(0)
    paths = rng.integers(0, 1000, size=(3, 20))
    means = spliced_case_means(np.full(60, c), paths, 7)
    cand = D(7, -10.0, 10.0)
    got = expected_deaths(np.full(3, logit(0.01)), cand, means[:, 0])
    np.testing.assert_allclose(got, 0.01 * c, rtol=1e-9)


def test_splice_boundary_audit():
    for nu in (7, 14, 21, 28, 35):
        assert not spliced_window_sources(nu, nu).any()
        src = spliced_window_sources(nu, nu + 1)
        assert src.sum() == 1 and src[-1]
    obs = np.arange(100, dtype=float)
    paths = np.full((1, 40), 1000.0)
    m = spliced_case_means(obs, paths, 7)[0]
    assert m[6] == pytest.approx(obs[-7:].mean())  # k = nu
    assert m[7] == pytest.approx((obs[-6:].sum() + 1000) / 7)  # k = nu + 1
    assert m[13] == pytest.approx(1000.0)


@given(st.floats(-12, 2), st.floats(-12, 0), st.floats(0.1, 5), st.floats(0, 1e4))
def test_clipped_cfr_in_bounds_and_identity_clamp(trend, lo, width, mean):
    c = D(14, lo, lo + width)
    g = expected_deaths(trend, c, 1.0)
    assert expit(lo) - 1e-15 <= g <= expit(lo + width) + 1e-15
    wide = D(14, -1e3, 1e3)
    assert expected_deaths(trend, wide, mean) == pytest.approx(expit(trend) * mean, rel=1e-12)
    assert expected_deaths(trend, c, 0.0) == 0.0


@pytest.fixture(scope="module")
def region():
    return synthetic_region("d", "falling", population=5_000_000, level=900.0, seed=11)


def test_fit_death_tuning(region):
    fit = fit_death_tuning(region, CFG)
    assert abs(fit.posterior.probs.sum() - 1) < 1e-12
    assert {c.nu for c in fit.posterior.candidates} <= set(CFG.nu_grid)
    assert set(fit.by_nu) == set(CFG.nu_grid)


def test_death_sample_follows_its_case_sample(region):
    cases = forecast_cases(region, CFG)
    d0 = forecast_deaths(region, cases, CFG)
    assert d0.regime == FULL and (d0.samples >= 0).all()
    bumped = cases.ensemble.samples.copy()
    bumped[5] += 10_000
    ens = dataclasses.replace(cases.ensemble, samples=bumped)
    d1 = forecast_deaths(region, dataclasses.replace(cases, ensemble=ens), CFG)
    changed = np.flatnonzero((d0.samples != d1.samples).any(axis=1))
    assert changed.tolist() == [5]


def test_zero_death_tail_is_bernoulli(region):
    deaths = region.daily_deaths.copy()
    deaths[-28:] = 0
    s = RegionSeries.from_daily("d", region.dates[0], region.daily_cases, deaths, region.population)
    ens = forecast_deaths(s, forecast_cases(s, CFG), CFG)
    assert ens.regime == SPARSE_BERNOULLI
    assert set(np.unique(ens.samples)) <= {0, 1}
