"""Piecewise approximations of softplus, log(1 + exp(z)).

Two schemes restore conjugacy in the variational updates:

* quadratic, ``softplus(z) ~= rho * z + zeta * z**2`` (used for the
  regression coefficients and random intercepts);
* linear, ``softplus(z) ~= phi * z`` (used for the scale ``b``).

Coefficients are piecewise constant on right-closed intervals, so a point
sitting on a breakpoint takes the coefficients of the interval to its left.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QUAD_BREAKS",
    "QUAD_RHO",
    "QUAD_ZETA",
    "LIN_BREAKS",
    "LIN_PHI",
    "PiecewiseQuadCoeffs",
    "PiecewiseLinCoeff",
    "quad_coeffs",
    "lin_coeff",
    "quad_coeffs_array",
    "lin_coeff_array",
    "softplus",
]

QUAD_BREAKS = np.array([-5.0, -1.7, 1.7, 5.0])
QUAD_RHO = np.array([0.0, 0.1696, 0.5, 0.8303, 1.0])
QUAD_ZETA = np.array([0.0, 0.0189, 0.1138, 0.0190, 0.0])

LIN_BREAKS = np.array([-5.0, -1.701, 0.0, 1.702, 5.0])
LIN_PHI = np.array([0.0, 0.0426, 0.3052, 0.6950, 0.9574, 1.0])


@dataclass(frozen=True)
class PiecewiseQuadCoeffs:
    rho: float
    zeta: float


@dataclass(frozen=True)
class PiecewiseLinCoeff:
    phi: float


def _interval(breaks: np.ndarray, z):
    # number of breakpoints strictly below z -> right-closed intervals
    return np.searchsorted(breaks, z, side="left")


def _check_finite(z) -> None:
    if not np.all(np.isfinite(z)):
        raise ValueError("approximation argument must be finite")


def quad_coeffs(z: float) -> PiecewiseQuadCoeffs:
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"approximation argument must be finite, got {z!r}")
    k = int(_interval(QUAD_BREAKS, z))
    return PiecewiseQuadCoeffs(float(QUAD_RHO[k]), float(QUAD_ZETA[k]))


def lin_coeff(z: float) -> PiecewiseLinCoeff:
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"approximation argument must be finite, got {z!r}")
    return PiecewiseLinCoeff(float(LIN_PHI[int(_interval(LIN_BREAKS, z))]))


def quad_coeffs_array(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`quad_coeffs`; returns ``(rho, zeta)`` arrays."""
    z = np.asarray(z, dtype=float)
    _check_finite(z)
    k = _interval(QUAD_BREAKS, z)
    return QUAD_RHO[k], QUAD_ZETA[k]


def lin_coeff_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    _check_finite(z)
    return LIN_PHI[_interval(LIN_BREAKS, z)]


def softplus(z):
    return np.logaddexp(0.0, z)
