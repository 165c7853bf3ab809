import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trendbands.bands import (
    achieved_coverage,
    build_eval_sets,
    column_quantiles,
    empirical_quantile,
    pointwise_band,
    simultaneous_band,
    subset_index,
)
from trendbands.domain import CenteredDraws, EvalGrid, TrendCurve
from trendbands.exceptions import InvalidInputError, NoBandError


def _draws(matrix, valid=None):
    matrix = np.asarray(matrix, dtype=float)
    G = matrix.shape[1]
    grid = EvalGrid(np.linspace(0.1, 0.9, G))
    valid = np.ones(G, dtype=bool) if valid is None else np.asarray(valid)
    return CenteredDraws(grid=grid, draws=matrix, valid=valid)


def _curve(draws, center=0.0):
    G = len(draws.grid)
    return TrendCurve(grid=draws.grid, estimate=np.full(G, center), valid=np.ones(G, dtype=bool))


def _brute_coverage(matrix, B, level):
    sorted_draws = np.sort(matrix, axis=0)
    lo = column_quantiles(sorted_draws, level / 2)
    hi = column_quantiles(sorted_draws, 1 - level / 2)
    return np.mean(np.all((matrix >= lo) & (matrix <= hi), axis=1))


def test_empirical_quantile_examples():
    draws = np.arange(1.0, 11.0)
    assert empirical_quantile(draws, 0.5) == 5.0
    assert empirical_quantile(draws, 1.0) == 10.0
    assert empirical_quantile(draws, 0.1) == 1.0
    assert empirical_quantile(draws, 0.11) == 2.0
    with pytest.raises(InvalidInputError):
        empirical_quantile(draws, 0.0)
    with pytest.raises(InvalidInputError):
        empirical_quantile(np.array([]), 0.5)


def test_empirical_quantile_is_monotone_in_level():
    draws = np.sort(np.random.default_rng(1).normal(size=37))
    levels = np.linspace(0.01, 1.0, 200)
    values = [empirical_quantile(draws, a) for a in levels]
    assert np.all(np.diff(values) >= 0)


def test_zero_draws_collapse_the_band():
    draws = _draws(np.zeros((50, 4)))
    m_hat = _curve(draws, 3.0)
    band = pointwise_band(draws, m_hat, 0.1)
    np.testing.assert_array_equal(band.lower, 3.0)
    np.testing.assert_array_equal(band.upper, 3.0)
    simultaneous = simultaneous_band(draws, m_hat, 0.1, np.arange(4))
    np.testing.assert_array_equal(simultaneous.width, 0.0)


def test_small_band_by_hand():
    # B = 10 draws on three points, columns are shifted permutations of 1..10
    base = np.arange(1.0, 11.0)
    matrix = np.stack([base, np.roll(base, 1), np.roll(base, 2)], axis=1)
    draws = _draws(matrix)
    band = simultaneous_band(draws, _curve(draws), 0.3, np.arange(3))
    # levels 0.1, 0.2, 0.3 give quantile pairs (1, 10), (1, 9), (2, 9)
    # and joint coverage 1.0, 0.7, 0.6
    assert band.alpha_s == pytest.approx(0.2)
    assert band.achieved_coverage == pytest.approx(0.7)
    np.testing.assert_array_equal(band.lower, -9.0)
    np.testing.assert_array_equal(band.upper, -1.0)


def test_symmetric_draws_give_symmetric_band():
    half = np.random.default_rng(2).normal(size=(200, 5))
    draws = _draws(np.concatenate([half, -half]))
    band = pointwise_band(draws, _curve(draws, 1.0), 0.1)
    sorted_draws = np.sort(draws.draws, axis=0)
    gaps = np.max(np.diff(sorted_draws, axis=0), axis=0)
    assert np.all(np.abs((band.upper - 1.0) + (band.lower - 1.0)) <= gaps + 1e-12)


def test_pointwise_bands_nest_in_alpha():
    rng = np.random.default_rng(3)
    for _ in range(100):
        B = int(rng.integers(20, 120))
        draws = _draws(rng.standard_normal((B, 6)))
        m_hat = _curve(draws)
        wide = pointwise_band(draws, m_hat, 0.05)
        narrow = pointwise_band(draws, m_hat, 0.2)
        assert np.all(wide.lower <= narrow.lower)
        assert np.all(narrow.upper <= wide.upper)


def test_simultaneous_band_is_wider_than_pointwise():
    draws = _draws(np.random.default_rng(4).standard_normal((499, 20)))
    m_hat = _curve(draws)
    pointwise = pointwise_band(draws, m_hat, 0.05)
    simultaneous = simultaneous_band(draws, m_hat, 0.05, np.arange(20))
    assert simultaneous.alpha_s <= 0.05
    assert np.all(simultaneous.lower <= pointwise.lower)
    assert np.all(pointwise.upper <= simultaneous.upper)


def test_selected_level_is_closest_to_target():
    rng = np.random.default_rng(5)
    B = 199
    matrix = rng.standard_normal((B, 8)).cumsum(axis=1)
    draws = _draws(matrix)
    band = simultaneous_band(draws, _curve(draws), 0.1, np.arange(8))
    levels = np.arange(1, int(0.1 * B) + 1) / B
    coverage = np.array([_brute_coverage(matrix, B, a) for a in levels])
    gap = np.abs(coverage - 0.9)
    assert band.achieved_coverage == pytest.approx(_brute_coverage(matrix, B, band.alpha_s))
    assert abs(band.achieved_coverage - 0.9) == pytest.approx(gap.min())
    assert band.alpha_s == pytest.approx(levels[np.flatnonzero(gap <= gap.min() + 1e-12).max()])


def test_reported_coverage_matches_audit():
    draws = _draws(np.random.default_rng(6).standard_normal((299, 10)))
    band = simultaneous_band(draws, _curve(draws), 0.05, np.arange(10))
    assert achieved_coverage(draws, band) == band.achieved_coverage


def test_single_point_band_matches_pointwise_level():
    B = 999
    draws = _draws(np.random.default_rng(7).standard_normal((B, 1)))
    band = simultaneous_band(draws, _curve(draws), 0.05, np.array([0]))
    assert abs(band.alpha_s - 0.05) <= 2 / B
    assert abs(band.achieved_coverage - 0.95) <= 2 / B


def test_invalid_subset_points_are_dropped(caplog):
    matrix = np.random.default_rng(8).standard_normal((99, 5))
    valid = np.array([True, False, True, True, False])
    matrix[:, ~valid] = np.nan
    draws = _draws(matrix, valid)
    with caplog.at_level(logging.WARNING):
        band = simultaneous_band(draws, _curve(draws), 0.1, np.arange(5))
    assert len(band.grid) == 3
    np.testing.assert_array_equal(band.grid.points, draws.grid.points[valid])
    assert "dropped 2 invalid subset points" in caplog.text


def test_no_band_errors():
    draws = _draws(np.zeros((10, 2)), valid=[False, True])
    with pytest.raises(NoBandError):
        simultaneous_band(draws, _curve(draws), 0.2, np.array([0]))
    with pytest.raises(NoBandError):
        simultaneous_band(draws, _curve(draws), 0.05, np.array([1]))
    with pytest.raises(InvalidInputError):
        simultaneous_band(draws, _curve(draws), 0.2, np.array([], dtype=int))


def test_pointwise_band_marks_invalid_points():
    matrix = np.random.default_rng(9).standard_normal((49, 3))
    matrix[:, 1] = np.nan
    draws = _draws(matrix, [True, False, True])
    band = pointwise_band(draws, _curve(draws), 0.1)
    np.testing.assert_array_equal(band.valid, [True, False, True])
    assert np.isnan(band.lower[1]) and np.isnan(band.upper[1])


def test_build_eval_sets():
    G_sub, G = build_eval_sets(0.06)
    assert len(G_sub) == 26
    assert len(G) == 52
    assert set(np.round(G_sub.points, 12)) <= set(np.round(G.points, 12))
    assert G.points[0] == pytest.approx(0.14)
    assert G.points[-1] == pytest.approx(0.86)

    G_sub, _ = build_eval_sets(0.02)
    np.testing.assert_allclose(G_sub.points[:5], [0.18, 0.19, 0.20, 0.21, 0.22])

    with pytest.raises(InvalidInputError):
        build_eval_sets(0.2)


def test_subset_index():
    grid = EvalGrid(np.arange(1, 100) / 100)
    _, G = build_eval_sets(0.05)
    index = subset_index(grid, G.points)
    np.testing.assert_allclose(grid.points[index], G.points)
    with pytest.raises(InvalidInputError):
        subset_index(grid, np.array([0.555]))


@settings(max_examples=200, deadline=None)
@given(
    st.integers(20, 60).flatmap(
        lambda B: arrays(np.float64, (B, 7), elements=st.floats(-10, 10, allow_nan=False, allow_infinity=False))
    )
)
def test_simultaneous_band_contains_pointwise_band(matrix):
    draws = _draws(matrix)
    m_hat = _curve(draws)
    pointwise = pointwise_band(draws, m_hat, 0.1)
    simultaneous = simultaneous_band(draws, m_hat, 0.1, np.arange(7))
    assert np.all(simultaneous.lower <= pointwise.lower)
    assert np.all(pointwise.upper <= simultaneous.upper)
    assert achieved_coverage(draws, simultaneous) == simultaneous.achieved_coverage
