"""Digamma and inverse-gamma moments needed by the variational updates."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats

__all__ = [
    "digamma",
    "invgamma_mean_inv",
    "invgamma_mean_inv_sq",
    "invgamma_mean_log",
    "invgamma_mean",
    "invgamma_interval",
]

# B_{2k} / (2k) for k = 1..7
_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
_RECURRENCE_FLOOR = 6.0


def _digamma_scalar(x: float) -> float:
    if not x > 0.0:
        raise ValueError(f"digamma requires x > 0, got {x!r}")
    if math.isinf(x):
        return math.inf
    shift = 0.0
    while x < _RECURRENCE_FLOOR:
        shift += 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    # Horner in 1/x^2
    series = 0.0
    for c in reversed(_ASYMPTOTIC):
        series = series * inv2 + c
    return math.log(x) - 0.5 / x - series * inv2 - shift


def digamma(x):
    """psi(x) = d/dx log Gamma(x) for x > 0.

    Shifts the argument upward with psi(x) = psi(x + 1) - 1/x until x >= 6,
    then applies the Stirling-type asymptotic series.
    """
    if np.ndim(x) == 0:
        return _digamma_scalar(float(x))
    arr = np.asarray(x, dtype=float)
    return np.vectorize(_digamma_scalar, otypes=[float])(arr)


def _check_shape_scale(shape: float, scale: float) -> None:
    if not (shape > 0 and scale > 0):
        raise ValueError(f"inverse-gamma shape and scale must be positive, got ({shape!r}, {scale!r})")


def invgamma_mean_inv(shape: float, scale: float) -> float:
    """E[1/X] for X ~ InvGamma(shape, scale)."""
    _check_shape_scale(shape, scale)
    return shape / scale


def invgamma_mean_inv_sq(shape: float, scale: float) -> float:
    """E[1/X^2] = Var(1/X) + E[1/X]^2 = (shape + shape^2) / scale^2."""
    _check_shape_scale(shape, scale)
    return (shape + shape * shape) / (scale * scale)


def invgamma_mean_log(shape: float, scale: float) -> float:
    _check_shape_scale(shape, scale)
    return math.log(scale) - digamma(shape)


def invgamma_mean(shape: float, scale: float) -> float | None:
    """Mean scale / (shape - 1), or ``None`` when shape <= 1 (undefined)."""
    _check_shape_scale(shape, scale)
    if shape <= 1.0:
        return None
    return scale / (shape - 1.0)


def invgamma_interval(shape: float, scale: float, level: float = 0.95) -> tuple[float, float]:
    """Equal-tailed credible interval of InvGamma(shape, scale)."""
    _check_shape_scale(shape, scale)
    tail = 0.5 * (1.0 - level)
    dist = stats.invgamma(shape, scale=scale)
    return float(dist.ppf(tail)), float(dist.isf(tail))
