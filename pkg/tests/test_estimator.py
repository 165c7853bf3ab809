import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trendbands.domain import EvalGrid, ObservedSeries
from trendbands.estimator import (
    Estimator,
    cv_select,
    default_grid,
    estimate_curve,
    local_constant,
    local_constant_curve,
    local_linear,
    local_linear_curve,
    mcv_criterion,
    mcv_select,
    observed_probability,
    residual_volatility,
    residuals,
    select_from_criteria,
    smoother,
)
from trendbands.exceptions import DegenerateFitError, InvalidInputError, NoSelectionError
from trendbands.rng import substream
from trendbands.simulation import markov_missing


@st.composite
def gappy(draw, min_n=20, max_n=200):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    share = draw(st.floats(0.0, 0.6))
    observed = rng.random(n) >= share
    observed[rng.integers(n)] = True
    values = rng.normal(size=n)
    return ObservedSeries(values=values, observed=observed)


bandwidths = st.floats(0.03, 0.5)
taus = st.floats(0.02, 0.98)


@settings(max_examples=1000, deadline=None)
@given(gappy(), bandwidths, taus, st.floats(-100, 100))
def test_local_constant_reproduces_constants(series, h, tau, c):
    flat = series.with_values(np.full(series.n, c))
    estimate = local_constant(flat, h, tau)
    if estimate is not None:
        assert estimate == pytest.approx(c, rel=1e-12, abs=1e-12)


@settings(max_examples=1000, deadline=None)
@given(gappy(), bandwidths, taus)
def test_local_constant_stays_within_window_range(series, h, tau):
    estimate = local_constant(series, h, tau)
    if estimate is not None:
        in_window = series.observed & (np.abs(series.rescaled_time - tau) <= h)
        window = series.values[in_window]
        assert window.min() - 1e-12 <= estimate <= window.max() + 1e-12


@settings(max_examples=1000, deadline=None)
@given(gappy(), bandwidths, taus, st.floats(-10, 10), st.floats(-100, 100))
def test_local_constant_is_affine_equivariant(series, h, tau, a, b):
    estimate = local_constant(series, h, tau)
    shifted = local_constant(series.with_values(a * series.values + b), h, tau)
    if estimate is None:
        assert shifted is None
    else:
        assert shifted == pytest.approx(a * estimate + b, abs=1e-9)


def test_local_constant_of_linear_ramp_at_midpoint():
    n = 1000
    series = ObservedSeries(values=np.arange(1, n + 1) / n, observed=np.ones(n, dtype=bool))
    assert abs(local_constant(series, 0.05, 0.5) - 0.5) <= 1e-12


@settings(max_examples=1000, deadline=None)
@given(gappy(), bandwidths, taus, st.floats(-10, 10), st.floats(-10, 10))
def test_local_linear_reproduces_affine_trends(series, h, tau, a, b):
    line = series.with_values(a + b * series.rescaled_time)
    fit = local_linear(line, h, tau)
    if fit is not None:
        level, slope = fit
        assert level == pytest.approx(a + b * tau, abs=1e-9)
        assert slope == pytest.approx(b, abs=1e-6)


@settings(max_examples=1000, deadline=None)
@given(gappy(), bandwidths, st.sampled_from(list(Estimator)))
def test_values_at_missing_indices_are_ignored(series, h, estimator):
    grid = default_grid(series.n, 0.0)
    perturbed = series.with_values(np.where(series.observed, series.values, 1e6))
    first = estimate_curve(series, h, grid, estimator)
    second = estimate_curve(perturbed, h, grid, estimator)
    np.testing.assert_array_equal(first.valid, second.valid)
    np.testing.assert_array_equal(first.estimate[first.valid], second.estimate[second.valid])


def test_point_and_curve_agree_exactly(gappy_series):
    grid = default_grid(gappy_series.n, 0.05)
    curve = local_constant_curve(gappy_series, 0.1, grid)
    linear = local_linear_curve(gappy_series, 0.1, grid)
    for g in (0, 30, len(grid) - 1):
        assert local_constant(gappy_series, 0.1, grid.points[g]) == curve.estimate[g]
        assert local_linear(gappy_series, 0.1, grid.points[g]) == (linear.estimate[g], linear.slope[g])


def test_insufficient_window_gives_none():
    observed = np.zeros(100, dtype=bool)
    observed[[10, 90]] = True
    series = ObservedSeries(values=np.ones(100), observed=observed)
    assert local_constant(series, 0.05, 0.5) is None
    assert local_linear(series, 0.05, 0.5) is None
    # one point in the window is still too little
    assert local_constant(series, 0.05, 0.11) is None


def test_smoother_rows_sum_to_one(gappy_series):
    fit = smoother(gappy_series.observed, 0.08, np.linspace(0.05, 0.95, 19), Estimator.LOCAL_LINEAR)
    sums = np.asarray(fit.matrix.sum(axis=1)).ravel()
    np.testing.assert_allclose(sums[fit.valid], 1.0, atol=1e-12)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, np.nan])
def test_bandwidth_and_tau_validation(gappy_series, bad):
    with pytest.raises(InvalidInputError):
        local_constant(gappy_series, bad, 0.5)
    with pytest.raises(InvalidInputError):
        local_constant(gappy_series, 0.1, bad)


def test_observed_probability_interior_full_sample():
    series = ObservedSeries(values=np.zeros(1000), observed=np.ones(1000, dtype=bool))
    assert observed_probability(series, 0.1, 0.5) == pytest.approx(1.0, abs=1e-3)


def test_observed_probability_tracks_missing_share():
    rng = np.random.default_rng(3)
    series = ObservedSeries(values=np.zeros(20000), observed=rng.random(20000) < 0.3)
    assert observed_probability(series, 0.2, 0.5) == pytest.approx(0.3, abs=0.03)


def test_observed_probability_of_periodic_pattern():
    # four observed periods out of every thirteen
    observed = np.tile(np.arange(13) < 4, 1000)
    series = ObservedSeries(values=np.zeros(observed.size), observed=observed)
    assert observed_probability(series, 0.2, 0.5) == pytest.approx(4 / 13, abs=1e-3)


def test_observed_probability_under_markov_missingness():
    n = 200_000
    observed = markov_missing(n, 0.20, 0.55, substream(13))
    series = ObservedSeries(values=np.zeros(n), observed=observed)
    assert observed_probability(series, 0.2, 0.5) == pytest.approx(0.20 / 0.65, abs=0.02)


def _brute_force_mcv(series, k, h):
    n = series.n
    t = np.arange(1, n + 1)
    errors = []
    for s in np.flatnonzero(series.observed):
        u = (t - (s + 1)) / (n * h)
        w = np.where(np.abs(u) <= 1, 0.75 * (1 - u * u), 0.0)
        w[np.abs(t - (s + 1)) <= k] = 0.0
        w[~series.observed] = 0.0
        if np.count_nonzero(w) < 2 or w.sum() < 1e-10:
            continue
        errors.append((w @ series.masked_values() / w.sum() - series.values[s]) ** 2)
    return np.mean(errors)


@pytest.mark.parametrize("k", [0, 2, 5])
def test_mcv_criterion_matches_direct_computation(gappy_series, k):
    assert mcv_criterion(gappy_series, k, 0.1) == pytest.approx(_brute_force_mcv(gappy_series, k, 0.1), rel=1e-10)


def test_mcv_select_picks_a_candidate(gappy_series):
    candidates = [0.2, 0.05, 0.1, 0.3]
    result = mcv_select(gappy_series, 3, candidates)
    assert result.selected_h in candidates
    assert result.k == 3
    assert sorted(result.criterion_by_h) == sorted(candidates)
    finite = {h: c for h, c in result.criterion_by_h.items() if np.isfinite(c)}
    assert result.criterion_by_h[result.selected_h] == min(finite.values())


def test_mcv_ties_resolve_to_smallest_bandwidth():
    series = ObservedSeries(values=np.zeros(80), observed=np.ones(80, dtype=bool))
    assert cv_select(series, [0.3, 0.1, 0.2]).selected_h == 0.1


def test_selection_from_precomputed_criteria():
    result = select_from_criteria({0.3: 1.0, 0.1: 1.0, 0.2: np.inf}, 2)
    assert result.selected_h == 0.1
    assert result.k == 2
    with pytest.raises(NoSelectionError):
        select_from_criteria({0.1: np.inf, 0.2: np.nan}, 0)
    with pytest.raises(InvalidInputError):
        select_from_criteria({}, 0)


def test_mcv_without_finite_criterion():
    series = ObservedSeries(values=np.zeros(100), observed=np.ones(100, dtype=bool))
    with pytest.raises(NoSelectionError):
        mcv_select(series, 0, [0.001, 0.002])
    with pytest.raises(InvalidInputError):
        mcv_select(series, 0, [])


def test_residuals_vanish_at_missing_indices(gappy_series):
    res = residuals(gappy_series, 0.3)
    assert np.all(res.values[~gappy_series.observed] == 0.0)
    assert not res.flagged.any()
    fitted = smoother(gappy_series.observed, 0.3, gappy_series.rescaled_time).apply(gappy_series.masked_values())
    np.testing.assert_allclose(
        res.values[gappy_series.observed],
        (gappy_series.values - fitted)[gappy_series.observed],
        atol=1e-12,
    )


def test_residuals_flag_points_without_fit(caplog):
    observed = np.zeros(100, dtype=bool)
    observed[[0, 40, 41, 42, 43, 99]] = True
    series = ObservedSeries(values=np.arange(100.0), observed=observed)
    with caplog.at_level(logging.WARNING):
        res = residuals(series, 0.05)
    np.testing.assert_array_equal(np.flatnonzero(res.flagged), [0, 99])
    assert res.values[0] == 0.0 and res.fitted[0] == 0.0
    assert "lack a fitted trend" in caplog.text


def test_residuals_degenerate_fit():
    observed = np.zeros(100, dtype=bool)
    observed[[0, 99]] = True
    series = ObservedSeries(values=np.ones(100), observed=observed)
    with pytest.raises(DegenerateFitError):
        residuals(series, 0.05)


def test_residual_volatility_of_scaled_noise():
    rng = np.random.default_rng(11)
    n = 4000
    series = ObservedSeries(values=2.0 * rng.standard_normal(n), observed=np.ones(n, dtype=bool))
    grid = EvalGrid(np.array([0.3, 0.5, 0.7]))
    curve = residual_volatility(series, 0.4, 0.2, grid)
    assert curve.valid.all()
    np.testing.assert_allclose(curve.estimate, 2.0, rtol=0.1)


def test_default_grid_respects_margin():
    grid = default_grid(100, 0.1)
    assert grid.points[0] == pytest.approx(0.11)
    assert grid.points[-1] == pytest.approx(0.89)
    assert len(grid) == 79
