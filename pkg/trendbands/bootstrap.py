"""Wild bootstrap for trend curves of series with missing values.

Residuals from an oversmoothed fit are multiplied by serially dependent
multipliers (AR(1) for the autoregressive variant, Bartlett-correlated for
the dependent variant, iid for the plain one), added back onto the
oversmoothed trend and re-smoothed. Missing indices stay missing in every
replicate.
"""
from __future__ import annotations

import logging
import math
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import linalg, signal

from trendbands import rng as rngs
from trendbands.domain import CenteredDraws, EvalGrid, ObservedSeries, TrendCurve
from trendbands.estimator import estimate_curve, residuals, smoother
from trendbands.exceptions import CovarianceRepairError, InsufficientDataError, InvalidInputError
from trendbands.scheduler import ReplicationScheduler
from trendbands.schemas import BootstrapConfig, BootstrapMethod

logger = logging.getLogger(__name__)

DEFAULT_THETA = 0.01
DEFAULT_B = 999

Sampler = Callable[[np.random.Generator], np.ndarray]


class BootstrapResult(NamedTuple):
    m_hat: TrendCurve
    m_tilde: TrendCurve
    draws: CenteredDraws


# Tuning conversions


def gamma_from_ell(theta: float, ell: float) -> float:
    """γ = θ^(1/ℓ): the AR parameter whose autocorrelation decays to θ after ℓ lags."""
    if not 0.0 < theta < 1.0:
        raise InvalidInputError(f"theta must lie in (0, 1), got {theta}")
    if not (math.isfinite(ell) and ell > 0.0):
        raise InvalidInputError(f"ell must be positive, got {ell}")
    return theta ** (1.0 / ell)


def ell_from_gamma(theta: float, gamma: float) -> float:
    """Inverse of ``gamma_from_ell``: ℓ = log θ / log γ."""
    if not 0.0 < theta < 1.0:
        raise InvalidInputError(f"theta must lie in (0, 1), got {theta}")
    if not 0.0 < gamma < 1.0:
        raise InvalidInputError(f"gamma must lie in (0, 1) to convert, got {gamma}")
    return math.log(theta) / math.log(gamma)


def ell_rule(n: int, c: float = 1.75) -> float:
    """Block length rule ℓ = c n^(1/3)."""
    return c * n ** (1.0 / 3.0)


def default_h_tilde(h: float, C: float = 2.0) -> float:
    """Oversmoothing bandwidth h̃ = C h^(5/9) for the residual fit."""
    return C * h ** (5.0 / 9.0)


# Multipliers


def awb_multipliers(n: int, gamma: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary Gaussian AR(1) with unit variance.

    ξ_1 ~ N(0, 1) and ξ_t = γ ξ_t-1 + ν_t with ν_t ~ N(0, 1 − γ²).
    """
    if not 0.0 <= gamma < 1.0:
        raise InvalidInputError(f"gamma must lie in [0, 1), got {gamma}")
    nu = rng.standard_normal(n)
    nu[1:] *= math.sqrt(1.0 - gamma * gamma)
    if gamma == 0.0:
        return nu
    return signal.lfilter([1.0], [1.0, -gamma], nu)


def bartlett_autocovariance(ell: float, max_lag: int) -> np.ndarray:
    lags = np.arange(max_lag + 1)
    return np.maximum(0.0, 1.0 - lags / ell)


def _banded_sampler(n: int, cov: np.ndarray) -> Sampler:
    u = cov.size - 1
    band = np.zeros((u + 1, n))
    for lag in range(u + 1):
        band[lag, : n - lag] = cov[lag]
    factor = linalg.cholesky_banded(band, lower=True)

    def draw(rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(n)
        xi = np.zeros(n)
        # ξ_t = Σ_i L[t, t−i] z_t−i, with L[t, t−i] stored at factor[i, t−i]
        for lag in range(u + 1):
            xi[lag:] += factor[lag, : n - lag] * z[: n - lag]
        return xi

    return draw


def _circulant_sampler(n: int, cov: np.ndarray) -> Sampler:
    full = np.zeros(n)
    full[: cov.size] = cov
    first_row = np.concatenate([full, full[-2:0:-1]]) if n > 1 else full
    m = first_row.size
    eigenvalues = np.fft.fft(first_row).real
    clipped = int((eigenvalues < 0).sum())
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    if not np.all(np.isfinite(eigenvalues)) or eigenvalues.max() <= 0.0:
        raise CovarianceRepairError("multiplier covariance has no positive spectrum after clipping")
    if clipped:
        logger.warning("DWB covariance repaired: %d negative eigenvalues clipped", clipped)
    scale = np.sqrt(eigenvalues / m)

    def draw(rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        return np.fft.fft(scale * z).real[:n]

    return draw


def dwb_sampler(n: int, ell: float) -> Sampler:
    """Factor the Bartlett covariance once; the returned callable draws one multiplier path."""
    if not (math.isfinite(ell) and ell >= 1.0):
        raise InvalidInputError(f"DWB block length must be >= 1, got {ell}")
    u = min(math.ceil(ell) - 1, n - 1)
    cov = bartlett_autocovariance(ell, u)
    try:
        return _banded_sampler(n, cov)
    except linalg.LinAlgError:
        logger.info("banded Cholesky failed for ell=%.4g, falling back to circulant embedding", ell)
        return _circulant_sampler(n, cov)


def dwb_multipliers(n: int, ell: float, rng: np.random.Generator) -> np.ndarray:
    """One ℓ-dependent Gaussian draw with Bartlett covariance."""
    return dwb_sampler(n, ell)(rng)


def multiplier_sampler(config: BootstrapConfig, n: int) -> Sampler:
    """Multiplier generator for the configured method; WB is AWB with γ = 0."""
    if config.method is BootstrapMethod.DWB:
        return dwb_sampler(n, config.ell)
    gamma = config.effective_gamma
    return lambda rng: awb_multipliers(n, gamma, rng)


# Replicates


def bootstrap_sample(
    series: ObservedSeries, residuals: np.ndarray, m_tilde_at_t: np.ndarray, xi: np.ndarray
) -> ObservedSeries:
    """y*_t = m̃(t/n) + ξ_t ẑ_t on the observed indices; the missing pattern is copied."""
    arrays = {"residuals": residuals, "m_tilde_at_t": m_tilde_at_t, "xi": xi}
    for name, array in arrays.items():
        if np.shape(array) != (series.n,):
            raise InvalidInputError(f"{name} has shape {np.shape(array)}, expected ({series.n},)")
    values = np.asarray(m_tilde_at_t) + np.asarray(xi) * np.asarray(residuals)
    return ObservedSeries(
        values=np.where(series.observed, values, np.nan), observed=series.observed, time=series.time
    )


def run_bootstrap(
    series: ObservedSeries,
    config: BootstrapConfig,
    grid: EvalGrid,
    workers: int = 1,
) -> BootstrapResult:
    """Draw ``config.B`` centered replicates m̂*(τ) − m̃(τ) on ``grid``.

    Replicate b takes its multipliers from the substream keyed by
    ``(config.seed, b)``, so the draws do not depend on ``workers``.
    """
    m_hat = estimate_curve(series, config.h, grid, config.estimator)
    m_tilde = estimate_curve(series, config.h_tilde, grid, config.estimator)
    valid = m_hat.valid & m_tilde.valid
    if not valid.any():
        raise InsufficientDataError("no grid point supports both the estimate and the oversmoothed fit")

    step_one = residuals(series, config.h_tilde, config.estimator)
    fit = smoother(series.observed, config.h, grid.points, config.estimator)
    sample = multiplier_sampler(config, series.n)
    observed = series.observed

    def replicate_rows(bounds: tuple) -> np.ndarray:
        start, stop = bounds
        xi = np.stack([sample(rngs.substream(config.seed, b)) for b in range(start, stop)])
        y_star = np.where(observed, step_one.fitted + xi * step_one.values, 0.0)
        return np.asarray(fit.matrix @ y_star.T).T

    scheduler = ReplicationScheduler(workers=workers, mode="thread")
    m_star = np.concatenate(scheduler.map(replicate_rows, scheduler.chunks(config.B)), axis=0)
    draws = m_star - m_tilde.estimate
    draws[:, ~valid] = np.nan
    logger.info(
        "%s bootstrap: B=%d, %d of %d grid points valid",
        config.method.value.upper(), config.B, int(valid.sum()), len(grid),
    )
    return BootstrapResult(m_hat=m_hat, m_tilde=m_tilde, draws=CenteredDraws(grid=grid, draws=draws, valid=valid))


def gamma_sweep(
    series: ObservedSeries,
    config: BootstrapConfig,
    grid: EvalGrid,
    gammas: Sequence[float],
    alpha: float = 0.05,
    subset: Optional[np.ndarray] = None,
    workers: int = 1,
) -> List[dict]:
    """Median simultaneous band width per AWB γ, for judging where the bands settle."""
    from trendbands.bands import simultaneous_band

    subset = np.arange(len(grid)) if subset is None else np.asarray(subset)
    rows = []
    for gamma in gammas:
        tuned = BootstrapConfig(
            **{**config.model_dump(), "method": BootstrapMethod.AWB, "gamma": gamma, "theta": None, "ell": None}
        )
        result = run_bootstrap(series, tuned, grid, workers=workers)
        band = simultaneous_band(result.draws, result.m_hat, alpha, subset)
        rows.append(
            {
                "gamma": float(gamma),
                "alpha_s": band.alpha_s,
                "median_width": float(np.median(band.width[band.valid])),
            }
        )
    return rows
