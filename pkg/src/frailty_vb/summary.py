"""Posterior summaries: point estimates, 95% credible intervals and the ICC."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cavi import FitResult
from .special import invgamma_interval, invgamma_mean

__all__ = ["Estimate", "PosteriorSummary", "summarize", "icc", "Z975"]

Z975 = 1.959963984540054
LOG_LOGISTIC_VAR = math.pi**2 / 3.0


@dataclass(frozen=True)
class Estimate:
    """Posterior mean with an equal-tailed 95% interval.

    ``mean`` is ``None`` when it does not exist (inverse-gamma shape <= 1).
    """

    mean: float | None
    lower: float
    upper: float

    @property
    def available(self) -> bool:
        return self.mean is not None

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def to_dict(self) -> dict:
        return {"mean": self.mean, "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True)
class PosteriorSummary:
    beta: tuple[Estimate, ...]
    b: Estimate
    sigma2_gamma: Estimate
    random_effects: tuple[Estimate, ...]
    icc: float | None


def icc(sigma2_gamma: float, b: float) -> float:
    """Intra-class correlation of log times: s2 / (s2 + b^2 pi^2 / 3)."""
    return sigma2_gamma / (sigma2_gamma + b * b * LOG_LOGISTIC_VAR)


def _normal(mean: float, var: float) -> Estimate:
    half = Z975 * math.sqrt(max(var, 0.0))
    return Estimate(float(mean), float(mean - half), float(mean + half))


def _invgamma(shape: float, scale: float) -> Estimate:
    lo, hi = invgamma_interval(shape, scale)
    return Estimate(invgamma_mean(shape, scale), lo, hi)


def summarize(result: FitResult) -> PosteriorSummary:
    s = result.state
    beta = tuple(_normal(m, v) for m, v in zip(s.mu, np.diag(s.Sigma)))
    effects = tuple(_normal(t, v) for t, v in zip(s.tau, s.sigma2))
    b = _invgamma(s.alpha, s.omega)
    s2 = _invgamma(s.lam, s.eta)
    rho = icc(s2.mean, b.mean) if (b.available and s2.available) else None
    return PosteriorSummary(beta=beta, b=b, sigma2_gamma=s2, random_effects=effects, icc=rho)
