"""Kernel trend estimators for series with missing observations.

All estimators here are linear smoothers: the estimate at τ is a weighted sum
of the observed values. `smoother` builds that weight matrix once, and the
point, curve and bootstrap code paths all apply it.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from scipy import sparse

from trendbands.domain import EvalGrid, MCVResult, ObservedSeries, Residuals, TrendCurve
from trendbands.exceptions import DegenerateFitError, InvalidInputError, NoSelectionError
from trendbands.kernel import EPANECHNIKOV, KernelSpec, evaluate, kernel_weights

logger = logging.getLogger(__name__)

MIN_WINDOW_POINTS = 2
MIN_WEIGHT_SUM = 1e-10
MAX_CONDITION = 1e12
MAX_FLAGGED_SHARE = 0.5


class Estimator(str, enum.Enum):
    LOCAL_CONSTANT = "local_constant"
    LOCAL_LINEAR = "local_linear"


@dataclass(frozen=True)
class Smoother:
    """Row g holds the weights producing the estimate at ``points[g]``."""

    points: np.ndarray
    matrix: sparse.csr_matrix
    valid: np.ndarray
    slope_matrix: Optional[sparse.csr_matrix] = None

    def apply(self, y: np.ndarray) -> np.ndarray:
        """Smooth ``y`` (length n, or n × B); invalid rows come back as NaN."""
        out = np.asarray(self.matrix @ y, dtype=float)
        out[~self.valid] = np.nan
        return out

    def apply_slope(self, y: np.ndarray) -> np.ndarray:
        """Local slope for the local linear smoother; NaN on invalid rows."""
        if self.slope_matrix is None:
            raise InvalidInputError("slope is only available for the local linear smoother")
        out = np.asarray(self.slope_matrix @ y, dtype=float)
        out[~self.valid] = np.nan
        return out


def check_bandwidth(h: float, name: str = "h") -> float:
    """Return ``h`` as a float, rejecting values outside (0, 1)."""
    if not (np.isfinite(h) and 0.0 < h < 1.0):
        raise InvalidInputError(f"bandwidth {name} must lie in (0, 1), got {h}")
    return float(h)


def _check_tau(tau: float) -> float:
    """Rescaled time must lie strictly inside (0, 1)."""
    if not (np.isfinite(tau) and 0.0 < tau < 1.0):
        raise InvalidInputError(f"tau must lie in (0, 1), got {tau}")
    return float(tau)


def smoother(
    observed: np.ndarray,
    h: float,
    points: np.ndarray,
    estimator: Estimator = Estimator.LOCAL_CONSTANT,
    kernel: KernelSpec = EPANECHNIKOV,
) -> Smoother:
    """Weight matrix of the chosen estimator at ``points``.

    A row is valid when at least two observed indices carry positive weight,
    the weights sum to at least 1e-10 and, for the local linear fit, the
    normal matrix has condition number at most 1e12. Invalid rows are zero.
    """
    observed = np.asarray(observed, dtype=bool)
    points = np.atleast_1d(np.asarray(points, dtype=float))
    n = observed.size
    check_bandwidth(h)

    weights = kernel_weights(kernel, n, h, points)
    weights.data *= observed[weights.indices]
    weights.eliminate_zeros()

    counts = np.diff(weights.indptr)
    rows = np.repeat(np.arange(points.size), counts)
    w = weights.data
    s0 = np.bincount(rows, weights=w, minlength=points.size)
    valid = (counts >= MIN_WINDOW_POINTS) & (s0 >= MIN_WEIGHT_SUM)

    estimator = Estimator(estimator)
    slope_matrix = None
    with np.errstate(divide="ignore", invalid="ignore"):
        if estimator is Estimator.LOCAL_CONSTANT:
            level = w / s0[rows]
        else:
            x = (weights.indices + 1) / n - points[rows]
            s1 = np.bincount(rows, weights=w * x, minlength=points.size)
            s2 = np.bincount(rows, weights=w * x * x, minlength=points.size)
            normal = np.stack([np.stack([s0, s1], -1), np.stack([s1, s2], -1)], -2)
            condition = np.linalg.cond(normal) if points.size else np.empty(0)
            valid &= np.isfinite(condition) & (condition <= MAX_CONDITION)
            # weights from the fit in x centred at its weighted mean
            center = s1 / s0
            xc = x - center[rows]
            spread = np.bincount(rows, weights=w * xc * xc, minlength=points.size)
            slope = w * xc / spread[rows]
            level = w / s0[rows] - center[rows] * slope

    dead = ~valid[rows]
    level[dead] = 0.0
    matrix = sparse.csr_matrix((level, weights.indices, weights.indptr), shape=weights.shape)
    if estimator is Estimator.LOCAL_LINEAR:
        slope[dead] = 0.0
        slope_matrix = sparse.csr_matrix((slope, weights.indices, weights.indptr), shape=weights.shape)
    return Smoother(points=points, matrix=matrix, valid=valid, slope_matrix=slope_matrix)


def estimate_curve(
    series: ObservedSeries,
    h: float,
    grid: EvalGrid,
    estimator: Estimator = Estimator.LOCAL_CONSTANT,
) -> TrendCurve:
    """Trend estimate on a grid; carries the slope for local linear fits."""
    if len(grid) == 0:
        raise InvalidInputError("evaluation grid is empty")
    fit = smoother(series.observed, h, grid.points, estimator)
    y = series.masked_values()
    slope = fit.apply_slope(y) if fit.slope_matrix is not None else None
    return TrendCurve(grid=grid, estimate=fit.apply(y), valid=fit.valid, slope=slope)


def local_constant_curve(series: ObservedSeries, h: float, grid: EvalGrid) -> TrendCurve:
    """Nadaraya-Watson estimate at every grid point."""
    return estimate_curve(series, h, grid, Estimator.LOCAL_CONSTANT)


def local_linear_curve(series: ObservedSeries, h: float, grid: EvalGrid) -> TrendCurve:
    """Local linear level and slope at every grid point."""
    return estimate_curve(series, h, grid, Estimator.LOCAL_LINEAR)


def local_constant(series: ObservedSeries, h: float, tau: float) -> Optional[float]:
    """Nadaraya-Watson estimate at τ, or None when the window holds too little data."""
    curve = local_constant_curve(series, h, EvalGrid(np.array([_check_tau(tau)])))
    return float(curve.estimate[0]) if curve.valid[0] else None


def local_linear(series: ObservedSeries, h: float, tau: float) -> Optional[Tuple[float, float]]:
    """(level, slope) of the local linear fit at τ, or None for a near-singular window."""
    curve = local_linear_curve(series, h, EvalGrid(np.array([_check_tau(tau)])))
    if not curve.valid[0]:
        return None
    return float(curve.estimate[0]), float(curve.slope[0])


def observed_probability_curve(
    series: ObservedSeries, h: float, points: np.ndarray, kernel: KernelSpec = EPANECHNIKOV
) -> np.ndarray:
    """p̂(τ) = (nh)^-1 Σ k_t(τ) D_t."""
    check_bandwidth(h)
    weights = kernel_weights(kernel, series.n, h, np.atleast_1d(points))
    return np.asarray(weights @ series.observed.astype(float)) / (series.n * h)


def observed_probability(series: ObservedSeries, h: float, tau: float) -> float:
    """Kernel estimate of the chance that the period at τ is observed."""
    return float(observed_probability_curve(series, h, np.array([_check_tau(tau)]))[0])


def mcv_criterion(series: ObservedSeries, k: int, h: float, kernel: KernelSpec = EPANECHNIKOV) -> float:
    """Mean squared leave-(2k+1)-out prediction error over the observed indices.

    The leave-out estimate at t/n drops every s with |s − t| ≤ k. Indices whose
    leave-out window is insufficient are skipped and the mean is taken over
    the remaining ones; inf when nothing contributes.
    """
    check_bandwidth(h)
    if k < 0:
        raise InvalidInputError(f"leave-out half width k must be nonnegative, got {k}")
    n = series.n
    reach = int(np.floor(h * n * kernel.support_halfwidth)) + 1
    lags = np.arange(-reach, reach + 1)
    w = evaluate(kernel, lags / (n * h))
    w[np.abs(lags) <= k] = 0.0

    d = series.observed.astype(float)
    y = series.masked_values()

    def window_sum(signal: np.ndarray, taps: np.ndarray) -> np.ndarray:
        return np.convolve(signal, taps, mode="full")[reach : reach + n]

    numerator = window_sum(d * y, w)
    denominator = window_sum(d, w)
    count = window_sum(d, (w > 0).astype(float))
    usable = series.observed & (count >= MIN_WINDOW_POINTS) & (denominator >= MIN_WEIGHT_SUM)
    if not usable.any():
        return float("inf")
    prediction = numerator[usable] / denominator[usable]
    return float(np.mean((prediction - series.values[usable]) ** 2))


def select_from_criteria(criterion: Dict[float, float], k: int) -> MCVResult:
    """Pick the minimiser of already computed criterion values."""
    if not criterion:
        raise InvalidInputError("no candidate bandwidths given")
    finite = {h: c for h, c in criterion.items() if np.isfinite(c)}
    if not finite:
        raise NoSelectionError("every candidate bandwidth gives a non-finite criterion")
    # ties resolve to the smallest bandwidth
    selected = min(finite, key=lambda h: (finite[h], h))
    logger.info("MCV (k=%d) selected h=%.6g over %d candidates", k, selected, len(criterion))
    return MCVResult(selected_h=selected, criterion_by_h=dict(criterion), k=k)


def mcv_select(series: ObservedSeries, k: int, candidates: Iterable[float]) -> MCVResult:
    """Bandwidth minimising the leave-(2k+1)-out criterion; ties go to the smallest h."""
    candidates = sorted(float(check_bandwidth(h)) for h in candidates)
    if not candidates:
        raise InvalidInputError("no candidate bandwidths given")
    return select_from_criteria({h: mcv_criterion(series, k, h) for h in candidates}, k)


def cv_select(series: ObservedSeries, candidates: Iterable[float]) -> MCVResult:
    """Ordinary leave-one-out cross-validation."""
    return mcv_select(series, 0, candidates)


def residuals(
    series: ObservedSeries,
    h_tilde: float,
    estimator: Estimator = Estimator.LOCAL_CONSTANT,
) -> Residuals:
    """ẑ_t = D_t (y_t − m̃(t/n)) with m̃ smoothed at the oversmoothing bandwidth.

    Observed indices where m̃ is undefined are flagged; their residual is zero
    and their fitted value falls back to the observation itself.
    """
    check_bandwidth(h_tilde, "h_tilde")
    fit = smoother(series.observed, h_tilde, series.rescaled_time, estimator)
    y = series.masked_values()
    fitted = fit.apply(y)
    flagged = series.observed & ~fit.valid
    if flagged.sum() > MAX_FLAGGED_SHARE * series.n_observed:
        raise DegenerateFitError(
            f"oversmoothed fit undefined at {int(flagged.sum())} of {series.n_observed} observed points"
        )
    if flagged.any():
        logger.warning("residuals: %d observed indices lack a fitted trend", int(flagged.sum()))
    fitted = np.where(flagged, y, fitted)
    fitted = np.where(np.isfinite(fitted), fitted, 0.0)
    values = np.where(series.observed & ~flagged, y - fitted, 0.0)
    return Residuals(values=values, fitted=fitted, flagged=flagged)


def residual_volatility(
    series: ObservedSeries, h_tilde: float, h: float, grid: EvalGrid
) -> TrendCurve:
    """Local standard deviation of the residuals: sqrt of a smoothed ẑ_t²."""
    res = residuals(series, h_tilde)
    usable = series.observed & ~res.flagged
    squared = ObservedSeries(values=res.values**2, observed=usable)
    variance = local_constant_curve(squared, h, grid)
    return TrendCurve(grid=grid, estimate=np.sqrt(variance.estimate), valid=variance.valid)


def default_grid(n: int, delta: float) -> EvalGrid:
    """Rescaled time points t/n kept away from both boundaries by δ."""
    points = np.arange(1, n + 1) / n
    return EvalGrid(points[(points > delta) & (points < 1.0 - delta)])
