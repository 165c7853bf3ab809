"""Seasonal Fourier regression and the Lomb-Scargle periodogram for gappy series."""
from __future__ import annotations

import logging
import math

import numpy as np
import pandas as pd
from scipy import signal

from trendbands.domain import FourierFit, ObservedSeries, Periodogram, SpectralTable
from trendbands.exceptions import FitError, InvalidInputError

logger = logging.getLogger(__name__)

J2000 = 2451545.0
DAYS_PER_YEAR = 365.25


def _observed_times(series: ObservedSeries, time_in_years) -> np.ndarray:
    time = np.asarray(time_in_years, dtype=float)
    if time.shape != (series.n,):
        raise InvalidInputError(f"time axis has shape {time.shape}, expected ({series.n},)")
    t = time[series.observed]
    if not np.all(np.isfinite(t)):
        raise InvalidInputError("time axis must be finite at observed indices")
    return t


def fourier_design(t: np.ndarray, M: int, intercept: bool = False) -> np.ndarray:
    """Columns cos(2πjt), sin(2πjt) for j = 1..M, interleaved, after an optional constant."""
    j = np.arange(1, M + 1)
    angle = 2.0 * np.pi * np.outer(t, j)
    harmonics = np.stack([np.cos(angle), np.sin(angle)], axis=-1).reshape(t.size, 2 * M)
    if intercept:
        return np.column_stack([np.ones(t.size), harmonics])
    return harmonics


def fourier_fit(
    series: ObservedSeries, time_in_years, M: int, intercept: bool = False
) -> FourierFit:
    """Least squares of the observed values on M annual harmonics.

    ``coefficients[j - 1]`` holds (a_j, b_j). Residuals keep the missing
    pattern of the input.
    """
    if int(M) != M or M < 1:
        raise InvalidInputError(f"number of harmonics must be a positive integer, got {M}")
    M = int(M)
    t = _observed_times(series, time_in_years)
    n_columns = 2 * M + int(intercept)
    if t.size < max(2 * M, n_columns):
        raise InvalidInputError(f"{t.size} observed points cannot support {n_columns} regressors")

    design = fourier_design(t, M, intercept)
    y = series.values[series.observed]
    beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < n_columns:
        raise FitError(f"Fourier design with M={M} is rank deficient ({rank} < {n_columns})")

    fitted_residuals = y - design @ beta
    values = np.full(series.n, np.nan)
    values[series.observed] = fitted_residuals
    harmonics = beta[int(intercept):].reshape(M, 2)
    return FourierFit(
        M=M,
        coefficients=harmonics,
        residual_series=ObservedSeries(values=values, observed=series.observed, time=series.time),
        mse=float(fitted_residuals @ fitted_residuals / t.size),
        n_obs=int(t.size),
        intercept=float(beta[0]) if intercept else None,
    )


def info_criteria(fit: FourierFit) -> tuple[float, float, float]:
    """(AIC, BIC, MSE) under the Gaussian log-likelihood with 2M + 1 parameters."""
    if not fit.mse > 0.0:
        raise FitError("information criteria are undefined for a perfect fit (mse = 0)")
    n = fit.n_obs
    fit_term = n * math.log(2.0 * math.pi * fit.mse) + n
    return (
        fit_term + 2.0 * fit.n_params,
        fit_term + math.log(n) * fit.n_params,
        fit.mse,
    )


def fourier_sweep(
    series: ObservedSeries, time_in_years, max_M: int, intercept: bool = False
) -> SpectralTable:
    rows = []
    for M in range(1, max_M + 1):
        aic, bic, mse = info_criteria(fourier_fit(series, time_in_years, M, intercept))
        rows.append({"M": M, "aic": aic, "bic": bic, "mse": mse})

    def best(key: str) -> int:
        # np.argmin keeps the first minimiser, i.e. the smaller M
        return rows[int(np.argmin([row[key] for row in rows]))]["M"]

    table = SpectralTable(rows=rows, best_aic=best("aic"), best_bic=best("bic"), best_mse=best("mse"))
    logger.info("Fourier sweep M=1..%d: AIC picks %d, BIC picks %d", max_M, table.best_aic, table.best_bic)
    return table


def lomb_scargle(series: ObservedSeries, time_in_years, frequencies) -> Periodogram:
    """Mean-centred Lomb-Scargle power, normalised by the sample variance.

    Frequencies are in cycles per unit of ``time_in_years``.
    """
    frequencies = np.atleast_1d(np.asarray(frequencies, dtype=float))
    if frequencies.size == 0 or not np.all(np.isfinite(frequencies)) or frequencies.min() <= 0.0:
        raise InvalidInputError("frequencies must be positive and finite")
    t = _observed_times(series, time_in_years)
    if t.size < 3:
        raise InvalidInputError(f"periodogram needs at least 3 observed points, got {t.size}")
    if np.ptp(t) == 0.0:
        raise InvalidInputError("all observation times are equal")

    y = series.values[series.observed]
    y = y - y.mean()
    variance = float(y @ y / y.size)
    if variance == 0.0:
        return Periodogram(frequencies=frequencies, power=np.zeros(frequencies.size))
    power = signal.lombscargle(t, y, 2.0 * np.pi * frequencies) / variance
    return Periodogram(frequencies=frequencies, power=np.maximum(power, 0.0))


def fractional_years(dates) -> np.ndarray:
    """Calendar dates as years since the J2000 epoch on the Julian-year scale, plus 2000."""
    julian = pd.DatetimeIndex(pd.to_datetime(dates)).to_julian_date()
    return 2000.0 + (np.asarray(julian, dtype=float) - J2000) / DAYS_PER_YEAR
