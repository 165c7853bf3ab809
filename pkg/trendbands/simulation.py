"""Shifting-mean data generating process, Monte Carlo coverage and asymptotic oracles.

y_t = m(t/n) + σ(t/n) u_t with a logistic slope change in m, cyclical or
constant volatility, ARMA(1,1) errors normalised to unit signal-to-noise and
Markov-chain missingness drawn independently of the errors.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional

import numpy as np
from scipy import signal, special

from trendbands import rng as rngs
from trendbands.bands import build_eval_sets, pointwise_band, simultaneous_band, subset_index
from trendbands.bootstrap import run_bootstrap
from trendbands.domain import ObservedSeries
from trendbands.exceptions import InsufficientDataError, InvalidConfigError, InvalidInputError, TrendBandsError
from trendbands.kernel import EPANECHNIKOV, kernel_moments
from trendbands.scheduler import ReplicationScheduler
from trendbands.schemas import ConstantVolatility, CoverageReport, MarkovMissing, SimulationConfig

logger = logging.getLogger(__name__)

VOLATILITY_CHECK_POINTS = 1000
MIN_BURN_IN = 200


def logistic_transition(tau, lam: float, c: float):
    """G(τ; λ, c) = 1 / (1 + exp(−λ(τ − c)))."""
    if not lam > 0.0:
        raise InvalidConfigError(f"transition smoothness must be positive, got {lam}")
    return special.expit(lam * (np.asarray(tau, dtype=float) - c))


def trend_value(tau, beta1: float, beta2: float, lam: float, c: float):
    """m(τ) = β₁τ + β₂τ G(τ; λ, c)."""
    tau = np.asarray(tau, dtype=float)
    return beta1 * tau + beta2 * tau * logistic_transition(tau, lam, c)


def _cyclical(tau, sigma0: float, sigma_star: float, a: float, k: float):
    tau = np.asarray(tau, dtype=float)
    return sigma0 + (sigma_star - sigma0) * tau + a * np.cos(2.0 * np.pi * k * tau)


def check_volatility(sigma0: float, sigma_star: float, a: float, k: float) -> None:
    """σ must be positive on [0, 1], or vanish identically (noise-free design)."""
    values = _cyclical(np.linspace(0.0, 1.0, VOLATILITY_CHECK_POINTS), sigma0, sigma_star, a, k)
    if np.all(values == 0.0):
        return
    if not np.all(np.isfinite(values)) or values.min() <= 0.0:
        raise InvalidConfigError(
            f"volatility reaches {values.min():.4g} on [0, 1]; it must stay strictly positive"
        )


def volatility(tau, sigma0: float, sigma_star: float, a: float, k: float):
    """σ(τ) = σ₀ + (σ* − σ₀)τ + a cos(2πkτ)."""
    check_volatility(sigma0, sigma_star, a, k)
    return _cyclical(tau, sigma0, sigma_star, a, k)


def volatility_path(config: SimulationConfig, tau: np.ndarray) -> np.ndarray:
    vol = config.vol
    if isinstance(vol, ConstantVolatility):
        return np.full(np.shape(tau), vol.sigma)
    return volatility(tau, vol.sigma0, vol.sigma_star, vol.a, vol.k)


def innovation_variance(phi: float, psi: float) -> float:
    """Var(ε_t) chosen so that Var(u_t) = 1/4 for pure AR and pure MA errors."""
    return ((1.0 - phi * phi) / 4.0) / (1.0 + psi * psi - 2.0 * phi * psi)


def _check_phi(phi: float) -> None:
    if not (math.isfinite(phi) and abs(phi) < 1.0):
        raise InvalidConfigError(f"AR coefficient must satisfy |phi| < 1, got {phi}")


def burn_in(phi: float) -> int:
    """Discarded start-up length; grows as |φ| approaches one."""
    return max(MIN_BURN_IN, math.ceil(50.0 / (1.0 - abs(phi))))


def arma_errors(n: int, phi: float, psi: float, rng: np.random.Generator) -> np.ndarray:
    """u_t = φu_t−1 + ψε_t−1 + ε_t, started by discarding a burn-in stretch."""
    _check_phi(phi)
    if phi != 0.0 and psi != 0.0:
        logger.warning("mixed ARMA(1,1) errors (phi=%g, psi=%g) do not keep Var(u)=1/4", phi, psi)
    burn = burn_in(phi)
    eps = rng.normal(0.0, math.sqrt(innovation_variance(phi, psi)), n + burn)
    return signal.lfilter([1.0, psi], [1.0, -phi], eps)[burn:]


def stationary_observed_probability(p01: float, p11: float) -> float:
    """π₁ = p01 / (p01 + 1 − p11); a chain that never moves counts as always observed."""
    for name, p in (("p01", p01), ("p11", p11)):
        if not 0.0 <= p <= 1.0:
            raise InvalidInputError(f"{name} must lie in [0, 1], got {p}")
    denominator = p01 + 1.0 - p11
    if denominator == 0.0:
        return 1.0
    return p01 / denominator


def _sojourns(first_leave: float, second_leave: float, pairs: int, limit: int, rng: np.random.Generator):
    def lengths(leave: float) -> np.ndarray:
        if leave == 0.0:
            return np.full(pairs, limit, dtype=np.int64)
        return np.minimum(rng.geometric(leave, pairs), limit)

    return np.column_stack([lengths(first_leave), lengths(second_leave)]).ravel()


def markov_missing(n: int, p01: float, p11: float, rng: np.random.Generator) -> np.ndarray:
    """Observed flags D_1..D_n of a two-state chain started in its stationary law.

    Runs are generated as alternating geometric sojourns rather than step by step.
    """
    start = bool(rng.random() < stationary_observed_probability(p01, p11))
    if p01 == 0.0 and not start:
        logger.warning("missingness chain starts in the absorbing missing state: nothing is observed")
    leave = {True: 1.0 - p11, False: p01}
    mean_pair = sum(1.0 / q if q > 0 else float(n) for q in leave.values())

    pieces = []
    filled = 0
    while filled < n:
        pairs = int(math.ceil((n - filled) / mean_pair)) + 16
        lengths = _sojourns(leave[start], leave[not start], pairs, n, rng)
        stop = min(int(np.searchsorted(np.cumsum(lengths), n - filled)) + 1, lengths.size)
        lengths = lengths[:stop]
        states = np.tile([start, not start], pairs)[:stop]
        pieces.append(np.repeat(states, lengths))
        filled += int(lengths.sum())
        # the next batch resumes the alternation where this one stopped
        if stop % 2 == 1:
            start = not start
    return np.concatenate(pieces)[:n]


def simulate_series(config: SimulationConfig, rng: np.random.Generator) -> ObservedSeries:
    """One draw of the design; values at missing indices are generated and kept."""
    children = rng.spawn(2)
    tau = np.arange(1, config.n + 1) / config.n
    mean = trend_value(tau, config.beta1, config.beta2, config.lam, config.c)
    u = arma_errors(config.n, config.phi, config.psi, children[rngs.ERRORS])
    values = mean + volatility_path(config, tau) * u
    missing = config.missing
    if isinstance(missing, MarkovMissing):
        observed = markov_missing(config.n, missing.p01, missing.p11, children[rngs.MISSINGNESS])
    else:
        observed = np.ones(config.n, dtype=bool)
    return ObservedSeries(values=values, observed=observed)


def _coverage_replication(config: SimulationConfig, r: int) -> Optional[dict]:
    g_sub, g = build_eval_sets(config.bootstrap.h)
    sub = subset_index(g, g_sub.points)
    truth = trend_value(g.points, config.beta1, config.beta2, config.lam, config.c)
    try:
        series = simulate_series(config, rngs.substream(config.seed, r))
        boot = config.bootstrap.model_copy(update={"seed": rngs.derive_seed(config.seed, r, rngs.BOOTSTRAP)})
        result = run_bootstrap(series, boot, g)
        pointwise = pointwise_band(result.draws, result.m_hat, config.alpha)
        band_sub = simultaneous_band(result.draws, result.m_hat, config.alpha, sub)
        band_g = simultaneous_band(result.draws, result.m_hat, config.alpha, np.arange(len(g)))
    except TrendBandsError as exc:
        logger.warning("replication %d dropped: %s", r, exc)
        return None

    covered = pointwise.contains(truth)[pointwise.valid]
    return {
        "pointwise": float(covered.mean()),
        "sim_sub": float(band_sub.contains(truth[subset_index(g, band_sub.grid.points)]).all()),
        "sim_g": float(band_g.contains(truth[subset_index(g, band_g.grid.points)]).all()),
        "len_pointwise": float(np.median(pointwise.width[pointwise.valid])),
        "len_sub": float(np.median(band_sub.width)),
        "len_g": float(np.median(band_g.width)),
    }


def monte_carlo_coverage(config: SimulationConfig, workers: int = 1) -> CoverageReport:
    """Average pointwise and simultaneous coverage of the true trend over ``mc_reps`` designs.

    Replication r simulates from the substream ``(seed, r)`` and bootstraps with
    a seed derived from ``(seed, r, BOOTSTRAP)``; interval lengths are medians
    over the set's points, averaged over replications.
    """
    scheduler = ReplicationScheduler(workers=workers, mode="process")
    outcomes = scheduler.map(partial(_coverage_replication, config), range(config.mc_reps))
    completed = [o for o in outcomes if o is not None]
    dropped = config.mc_reps - len(completed)
    if not completed:
        raise InsufficientDataError(f"all {config.mc_reps} replications were dropped")
    if dropped:
        logger.warning("%d of %d replications dropped", dropped, config.mc_reps)

    def mean(key: str) -> float:
        return float(np.mean([o[key] for o in completed]))

    report = CoverageReport(
        pointwise_coverage=mean("pointwise"),
        simultaneous_coverage_gsub=mean("sim_sub"),
        simultaneous_coverage_g=mean("sim_g"),
        median_length_pointwise=mean("len_pointwise"),
        median_length_gsub=mean("len_sub"),
        median_length_g=mean("len_g"),
        mc_reps=config.mc_reps,
        completed_reps=len(completed),
        dropped_reps=dropped,
    )
    logger.info(
        "coverage %s: pointwise %.3f, G_sub %.3f, G %.3f",
        config.label or config.config_hash()[:8],
        report.pointwise_coverage,
        report.simultaneous_coverage_gsub,
        report.simultaneous_coverage_g,
    )
    return report


# Asymptotic oracles


def theoretical_lrv(phi: float, psi: float) -> float:
    """Ω_U = σ_ε²(1 + ψ)² / (1 − φ)²."""
    _check_phi(phi)
    return innovation_variance(phi, psi) * (1.0 + psi) ** 2 / (1.0 - phi) ** 2


def asymptotic_variance(
    tau: float,
    p_fn: Callable[[float], float],
    sigma_fn: Callable[[float], float],
    omega_u: float,
    kappa2: float,
) -> float:
    """σ²_as(τ) = p(τ)⁻¹ σ(τ)² Ω_U κ₂."""
    p = float(p_fn(tau))
    if not p > 0.0:
        raise InvalidInputError(f"observation probability must be positive at tau={tau}, got {p}")
    return float(sigma_fn(tau)) ** 2 * omega_u * kappa2 / p


def asymptotic_bias(
    tau: float,
    m_fn: Callable[[float], float],
    p_fn: Callable[[float], float],
    mu2: float,
    step: float = 1e-4,
) -> float:
    """B_as(τ) = μ₂ p(τ)⁻¹ [m p]''(τ), the second derivative by central differences."""
    p = float(p_fn(tau))
    if not p > 0.0:
        raise InvalidInputError(f"observation probability must be positive at tau={tau}, got {p}")

    def mp(x: float) -> float:
        return float(m_fn(x)) * float(p_fn(x))

    second = (mp(tau + step) - 2.0 * mp(tau) + mp(tau - step)) / (step * step)
    return mu2 * second / p


@dataclass(frozen=True)
class AsymptoticDiagnostics:
    omega_u: float
    kappa2: float
    taus: np.ndarray
    sigma2_as: np.ndarray
    b_as: np.ndarray


def asymptotic_diagnostics(config: SimulationConfig, taus) -> AsymptoticDiagnostics:
    """Asymptotic variance and bias of the local constant estimate at ``taus`` under ``config``."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    moments = kernel_moments(EPANECHNIKOV)
    omega_u = theoretical_lrv(config.phi, config.psi)
    missing = config.missing
    p = (
        stationary_observed_probability(missing.p01, missing.p11)
        if isinstance(missing, MarkovMissing)
        else 1.0
    )

    def p_fn(_tau: float) -> float:
        return p

    def sigma_fn(tau: float) -> float:
        return float(volatility_path(config, np.asarray(tau)))

    def m_fn(tau: float) -> float:
        return float(trend_value(tau, config.beta1, config.beta2, config.lam, config.c))

    return AsymptoticDiagnostics(
        omega_u=omega_u,
        kappa2=moments.kappa2,
        taus=taus,
        sigma2_as=np.array([asymptotic_variance(t, p_fn, sigma_fn, omega_u, moments.kappa2) for t in taus]),
        b_as=np.array([asymptotic_bias(t, m_fn, p_fn, moments.mu2) for t in taus]),
    )
