"""Array-valued domain objects passed between the estimation modules."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from trendbands.exceptions import InvalidInputError


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ObservedSeries:
    """Equally spaced values with an observed flag per index.

    Index ``t`` (0-based here) sits at rescaled time ``(t + 1) / n``. Values at
    missing indices are placeholders and never enter any estimate. ``time``
    optionally carries fractional years per index for seasonal work.
    """

    values: np.ndarray
    observed: np.ndarray
    time: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        observed = np.array(self.observed, dtype=bool)
        if values.ndim != 1 or observed.ndim != 1:
            raise InvalidInputError("series values and observed flags must be one-dimensional")
        if values.shape != observed.shape:
            raise InvalidInputError(
                f"values ({values.size}) and observed flags ({observed.size}) differ in length"
            )
        if values.size == 0 or not observed.any():
            raise InvalidInputError("series needs at least one observed value")
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "observed", _freeze(observed))
        if self.time is not None:
            time = np.array(self.time, dtype=float)
            if time.shape != values.shape:
                raise InvalidInputError("time axis must align with the values")
            object.__setattr__(self, "time", _freeze(time))

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def n_observed(self) -> int:
        return int(self.observed.sum())

    @property
    def rescaled_time(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n

    def masked_values(self) -> np.ndarray:
        """D_t * y_t: zero wherever the value is missing."""
        return np.where(self.observed, self.values, 0.0)

    def with_values(self, values: np.ndarray) -> "ObservedSeries":
        return ObservedSeries(values=values, observed=self.observed, time=self.time)


@dataclass(frozen=True)
class EvalGrid:
    points: np.ndarray

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=float).ravel()
        if points.size == 0:
            raise InvalidInputError("evaluation grid is empty")
        if not np.all(np.isfinite(points)) or points.min() <= 0.0 or points.max() >= 1.0:
            raise InvalidInputError("evaluation points must lie in the open unit interval")
        if points.size > 1 and np.any(np.diff(points) <= 0):
            raise InvalidInputError("evaluation points must be strictly increasing")
        object.__setattr__(self, "points", _freeze(points))

    def __len__(self) -> int:
        return int(self.points.size)

    def subset(self, index: np.ndarray) -> "EvalGrid":
        return EvalGrid(self.points[np.asarray(index)])


@dataclass(frozen=True)
class TrendCurve:
    grid: EvalGrid
    estimate: np.ndarray
    valid: np.ndarray
    slope: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        estimate = np.array(self.estimate, dtype=float)
        valid = np.array(self.valid, dtype=bool)
        if estimate.shape != (len(self.grid),) or valid.shape != estimate.shape:
            raise InvalidInputError("curve arrays must align with the grid")
        if not np.all(np.isfinite(estimate[valid])):
            raise InvalidInputError("curve estimate must be finite at valid points")
        object.__setattr__(self, "estimate", _freeze(estimate))
        object.__setattr__(self, "valid", _freeze(valid))


@dataclass(frozen=True)
class MCVResult:
    selected_h: float
    criterion_by_h: Dict[float, float]
    k: int = 0


@dataclass(frozen=True)
class Residuals:
    """Step-one residuals: ``values`` is ẑ_t, ``fitted`` is m̃(t/n)."""

    values: np.ndarray
    fitted: np.ndarray
    flagged: np.ndarray


@dataclass(frozen=True)
class CenteredDraws:
    """B × |grid| matrix of m̂*(τ) − m̃(τ)."""

    grid: EvalGrid
    draws: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        draws = np.asarray(self.draws, dtype=float)
        valid = np.asarray(self.valid, dtype=bool)
        if draws.ndim != 2 or draws.shape[1] != len(self.grid) or valid.shape != (len(self.grid),):
            raise InvalidInputError("draw matrix columns must align with the grid")
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "valid", valid)

    @property
    def B(self) -> int:
        return int(self.draws.shape[0])


@dataclass(frozen=True)
class Band:
    """Quantile-reflected confidence band; ``alpha_s`` is set for simultaneous bands."""

    grid: EvalGrid
    center: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    valid: np.ndarray
    alpha_s: Optional[float] = None
    achieved_coverage: Optional[float] = None

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInputError(f"alpha must lie in (0, 1), got {self.alpha}")
        valid = np.asarray(self.valid, dtype=bool)
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if np.any(lower[valid] > upper[valid]):
            raise InvalidInputError("band lower limit exceeds upper limit")
        object.__setattr__(self, "valid", valid)

    @property
    def width(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    def contains(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return (np.asarray(self.lower) <= values) & (values <= np.asarray(self.upper))


@dataclass(frozen=True)
class FourierFit:
    M: int
    coefficients: np.ndarray
    residual_series: ObservedSeries
    mse: float
    n_obs: int
    intercept: Optional[float] = None

    @property
    def n_params(self) -> int:
        # 2M harmonics + error variance (+ intercept)
        return 2 * self.M + 1 + (self.intercept is not None)


@dataclass(frozen=True)
class Periodogram:
    frequencies: np.ndarray
    power: np.ndarray

    @property
    def peak_frequency(self) -> float:
        return float(self.frequencies[int(np.argmax(self.power))])


@dataclass(frozen=True)
class SpectralTable:
    rows: list = field(default_factory=list)
    best_aic: int = 0
    best_bic: int = 0
    best_mse: int = 0
