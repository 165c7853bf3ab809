"""Compact-support kernels, their moments and localized weight matrices."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, sparse

from trendbands.exceptions import InvalidInputError


class KernelFamily(str, enum.Enum):
    EPANECHNIKOV = "epanechnikov"


@dataclass(frozen=True)
class KernelSpec:
    family: KernelFamily = KernelFamily.EPANECHNIKOV

    @property
    def support_halfwidth(self) -> float:
        return 1.0


@dataclass(frozen=True)
class KernelMoments:
    kappa1: float
    kappa2: float
    mu2: float


EPANECHNIKOV = KernelSpec()

# closed forms; authoritative over quadrature
_CLOSED_FORM_MOMENTS = {
    KernelFamily.EPANECHNIKOV: KernelMoments(kappa1=1.0, kappa2=0.6, mu2=0.2),
}


def evaluate(spec: KernelSpec, x: np.ndarray) -> np.ndarray:
    """Vectorised K(x); zero outside the support."""
    x = np.asarray(x, dtype=float)
    if spec.family is KernelFamily.EPANECHNIKOV:
        return np.where(np.abs(x) <= 1.0, 0.75 * (1.0 - x * x), 0.0)
    raise InvalidInputError(f"unsupported kernel family {spec.family!r}")


def eval_kernel(spec: KernelSpec, x: float) -> float:
    """Scalar K(x) for a finite argument."""
    if not math.isfinite(x):
        raise InvalidInputError(f"kernel argument must be finite, got {x}")
    return float(evaluate(spec, np.asarray(x)))


def quadrature_moments(spec: KernelSpec) -> KernelMoments:
    a = spec.support_halfwidth
    opts = dict(epsabs=0.0, epsrel=1e-10, limit=200)
    kappa1, _ = integrate.quad(lambda w: eval_kernel(spec, w), -a, a, **opts)
    kappa2, _ = integrate.quad(lambda w: eval_kernel(spec, w) ** 2, -a, a, **opts)
    mu2, _ = integrate.quad(lambda w: w * w * eval_kernel(spec, w), -a, a, **opts)
    return KernelMoments(kappa1=kappa1, kappa2=kappa2, mu2=mu2)


def kernel_moments(spec: KernelSpec) -> KernelMoments:
    """κ₁, κ₂ and μ₂; closed forms when known, quadrature otherwise."""
    closed = _CLOSED_FORM_MOMENTS.get(spec.family)
    return closed if closed is not None else quadrature_moments(spec)


def kernel_convolution(spec: KernelSpec, u: float) -> float:
    """κ(u) = ∫ K(ω) K(ω − u) dω."""
    a = spec.support_halfwidth
    lo, hi = max(-a, u - a), min(a, u + a)
    if lo >= hi:
        return 0.0
    value, _ = integrate.quad(
        lambda w: eval_kernel(spec, w) * eval_kernel(spec, w - u), lo, hi, epsrel=1e-10
    )
    return float(value)


def kernel_weights(spec: KernelSpec, n: int, h: float, points: np.ndarray) -> sparse.csr_matrix:
    """Sparse |points| × n matrix with entries K((t/n − τ)/h), t = 1..n.

    Each row is built from its own window only, so a single-point call
    reproduces the corresponding row of a larger call exactly.
    """
    points = np.atleast_1d(np.asarray(points, dtype=float))
    reach = h * spec.support_halfwidth
    # one index of slack on each side; the kernel itself zeroes the edges
    lo = np.clip(np.ceil((points - reach) * n).astype(np.int64) - 1, 1, n)
    hi = np.clip(np.floor((points + reach) * n).astype(np.int64) + 1, 1, n)
    counts = np.maximum(hi - lo + 1, 0)
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    rows = np.repeat(np.arange(points.size), counts)
    t = np.arange(counts.sum()) - np.repeat(offsets, counts) + np.repeat(lo, counts)
    u = (t / n - points[rows]) / h
    weights = evaluate(spec, u)
    keep = weights > 0.0
    return sparse.csr_matrix(
        (weights[keep], (rows[keep], t[keep] - 1)), shape=(points.size, n)
    )
