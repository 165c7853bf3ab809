"""Pointwise and simultaneous confidence bands from centered bootstrap draws.

Both band types reflect empirical quantiles of m̂*(τ) − m̃(τ) around m̂(τ).
The simultaneous band searches the pointwise level α_p over multiples of
1/B for the level whose joint coverage of the draws is closest to 1 − α.
"""
from __future__ import annotations

import logging
import math
from typing import Tuple

import numpy as np
from scipy import stats

from trendbands.domain import Band, CenteredDraws, EvalGrid, TrendCurve
from trendbands.exceptions import InvalidInputError, NoBandError

logger = logging.getLogger(__name__)

# absorbs float error in αB before taking the ceiling
_RANK_TOL = 1e-9


def _order_index(alpha: float, B: int) -> int:
    """1-based rank ⌈αB⌉ of the α-quantile among B sorted draws."""
    return min(max(math.ceil(alpha * B - _RANK_TOL), 1), B)


def empirical_quantile(sorted_draws: np.ndarray, alpha: float) -> float:
    """inf{u : F_B(u) ≥ α}, i.e. the order statistic x_(⌈αB⌉)."""
    sorted_draws = np.asarray(sorted_draws, dtype=float)
    if sorted_draws.size == 0:
        raise InvalidInputError("no draws to take a quantile of")
    if not 0.0 < alpha <= 1.0:
        raise InvalidInputError(f"quantile level must lie in (0, 1], got {alpha}")
    return float(sorted_draws[_order_index(alpha, sorted_draws.size) - 1])


def column_quantiles(sorted_draws: np.ndarray, alpha: float) -> np.ndarray:
    """Per-column order statistic of a matrix sorted along axis 0."""
    sorted_draws = np.asarray(sorted_draws, dtype=float)
    if sorted_draws.ndim != 2 or sorted_draws.shape[0] == 0:
        raise InvalidInputError("expected a nonempty B × G matrix of draws")
    if not 0.0 < alpha <= 1.0:
        raise InvalidInputError(f"quantile level must lie in (0, 1], got {alpha}")
    return sorted_draws[_order_index(alpha, sorted_draws.shape[0]) - 1]


def _check_aligned(draws: CenteredDraws, m_hat: TrendCurve) -> None:
    if not np.array_equal(draws.grid.points, m_hat.grid.points):
        raise InvalidInputError("draws and estimate live on different grids")


def _reflect(center: np.ndarray, sorted_draws: np.ndarray, level: float) -> Tuple[np.ndarray, np.ndarray]:
    lower = center - column_quantiles(sorted_draws, 1.0 - level / 2.0)
    upper = center - column_quantiles(sorted_draws, level / 2.0)
    return lower, upper


def pointwise_band(draws: CenteredDraws, m_hat: TrendCurve, alpha: float) -> Band:
    """[m̂(τ) − q_(1−α/2)(τ), m̂(τ) − q_(α/2)(τ)] at every grid point."""
    _check_aligned(draws, m_hat)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    valid = draws.valid & m_hat.valid
    lower, upper = _reflect(m_hat.estimate, np.sort(draws.draws, axis=0), alpha)
    lower = np.where(valid, lower, np.nan)
    upper = np.where(valid, upper, np.nan)
    return Band(grid=draws.grid, center=m_hat.estimate, lower=lower, upper=upper, alpha=alpha, valid=valid)


def simultaneous_band(
    draws: CenteredDraws, m_hat: TrendCurve, alpha: float, subset: np.ndarray
) -> Band:
    """Band over ``grid[subset]`` holding jointly with bootstrap probability ≈ 1 − α.

    Invalid subset points are dropped. Among levels with equal distance to
    the target the largest α_p (narrowest band) wins.
    """
    _check_aligned(draws, m_hat)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    subset = np.unique(np.asarray(subset, dtype=np.int64))
    if subset.size == 0:
        raise InvalidInputError("simultaneous band needs a nonempty subset")
    if subset.min() < 0 or subset.max() >= len(draws.grid):
        raise InvalidInputError("subset index outside the grid")

    valid = draws.valid & m_hat.valid
    keep = subset[valid[subset]]
    if keep.size < subset.size:
        logger.warning("simultaneous band: dropped %d invalid subset points", subset.size - keep.size)
    if keep.size == 0:
        raise NoBandError("every point of the requested subset is invalid")

    B = draws.B
    levels = np.arange(1, math.floor(alpha * B + _RANK_TOL) + 1)
    if levels.size == 0:
        raise NoBandError(f"alpha={alpha} is below the quantile resolution 1/B={1.0 / B:.4g}")

    matrix = draws.draws[:, keep]
    # count_le[b, s] = #{c : D[c, s] <= D[b, s]},  count_lt likewise with <
    count_le = stats.rankdata(matrix, method="max", axis=0)
    count_lt = stats.rankdata(matrix, method="min", axis=0) - 1
    row_min_le = count_le.min(axis=1)
    row_max_lt = count_lt.max(axis=1)

    k_lo = np.array([_order_index(j / B / 2.0, B) for j in levels])
    k_hi = np.array([_order_index(1.0 - j / B / 2.0, B) for j in levels])
    inside = (row_min_le[:, None] >= k_lo[None, :]) & (row_max_lt[:, None] <= k_hi[None, :] - 1)
    coverage = inside.mean(axis=0)

    gap = np.abs(coverage - (1.0 - alpha))
    best = np.flatnonzero(gap <= gap.min() + 1e-12).max()
    alpha_s = float(levels[best] / B)

    sorted_draws = np.sort(matrix, axis=0)
    center = m_hat.estimate[keep]
    lower, upper = _reflect(center, sorted_draws, alpha_s)
    logger.info(
        "simultaneous band over %d points: alpha_s=%.4g, bootstrap coverage %.4f",
        keep.size, alpha_s, coverage[best],
    )
    return Band(
        grid=draws.grid.subset(keep),
        center=center,
        lower=lower,
        upper=upper,
        alpha=alpha,
        valid=np.ones(keep.size, dtype=bool),
        alpha_s=alpha_s,
        achieved_coverage=float(coverage[best]),
    )


def achieved_coverage(draws: CenteredDraws, band: Band) -> float:
    """Share of replicates whose whole path m̂ − draw lies inside ``band``."""
    index = subset_index(draws.grid, band.grid.points)
    paths = band.center[None, :] - draws.draws[:, index]
    inside = (band.lower[None, :] <= paths) & (paths <= band.upper[None, :])
    return float(inside[:, band.valid].all(axis=1).mean())


def _union(h: float, blocks: range) -> EvalGrid:
    steps = np.arange(math.floor(200.0 * h + 1e-9) + 1) / 100.0
    points = np.concatenate([i / 5.0 - h + steps for i in blocks])
    return EvalGrid(np.unique(np.round(points, 12)))


def build_eval_sets(h: float) -> Tuple[EvalGrid, EvalGrid]:
    """(G_sub, G): unions of the 0.01-spaced h-neighbourhoods of 0.2, 0.4, 0.6, 0.8."""
    if not (math.isfinite(h) and 0.0 < h < 0.2):
        raise InvalidInputError(f"evaluation sets need 0 < h < 0.2, got {h}")
    return _union(h, range(1, 5, 3)), _union(h, range(1, 5))


def subset_index(grid: EvalGrid, points: np.ndarray) -> np.ndarray:
    """Positions of ``points`` inside ``grid``; every point must be on the grid."""
    points = np.asarray(points, dtype=float)
    index = np.clip(np.searchsorted(grid.points, points), 0, len(grid) - 1)
    left = np.clip(index - 1, 0, len(grid) - 1)
    nearer = np.abs(grid.points[left] - points) < np.abs(grid.points[index] - points)
    index = np.where(nearer, left, index)
    if not np.allclose(grid.points[index], points, rtol=0.0, atol=1e-12):
        raise InvalidInputError("requested points are not on the evaluation grid")
    return index
