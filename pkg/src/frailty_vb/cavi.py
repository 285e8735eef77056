"""Coordinate-ascent variational Bayes for the shared-frailty log-logistic AFT model.

Model::

    log T_ij = X_ij' beta + gamma_i + b * eps_ij,   eps_ij ~ Logistic(0, 1)
    gamma_i | s2 ~ N(0, s2)

with mean-field family q(beta) q(b) q(s2) prod_i q(gamma_i):

    q(beta)    = N(mu, Sigma)
    q(gamma_i) = N(tau_i, sigma2_i)
    q(b)       = InvGamma(alpha, omega)
    q(s2)      = InvGamma(lambda, eta)

The softplus term of the log-likelihood is replaced by piecewise
approximations whose coefficients depend on the standardized residual
z_ij = (y_ij - X_ij' beta - gamma_i) / b.  They are evaluated at the plug-in
value (y_ij - X_ij' mu - tau_i) * E[1/b], refreshed from the current state
right before each block update and held fixed during it.  Refreshing per
block keeps the sign of phi_ij consistent with the residual that the q(b)
update multiplies it by; with per-sweep coefficients a residual that changes
sign within the sweep can drive omega negative.

On the first sweep q(b) is InvGamma(alpha0 + #events, omega0): the shape has
absorbed the data but the scale has not, so E[1/b] is inflated by roughly the
event count and every plug-in residual lands in the flat outer pieces.  Until
q(b) has been updated once, residuals are scaled by the prior
E[1/b] = alpha0 / omega0 instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy import linalg

from .approx import lin_coeff_array, quad_coeffs_array
from .data import ClusteredDataset, Hyperparameters
from .special import (
    invgamma_mean_inv,
    invgamma_mean_inv_sq,
    invgamma_mean_log,
)

__all__ = [
    "NumericalFailure",
    "VariationalState",
    "Coefficients",
    "FitResult",
    "init_state",
    "plugin_coefficients",
    "update_beta",
    "update_gamma",
    "update_gammas",
    "update_b",
    "update_sigma_gamma",
    "compute_elbo",
    "elbo_terms",
    "sweep",
    "fit",
]

Surrogate = Literal["linear", "quadratic"]


class NumericalFailure(ArithmeticError):
    """A variational update produced an invalid parameter."""

    def __init__(self, update: str, iteration: int | None, detail: str):
        self.update = update
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(f"{update} failed{where}: {detail}")


@dataclass(frozen=True, eq=False)
class VariationalState:
    mu: np.ndarray
    Sigma: np.ndarray
    tau: np.ndarray
    sigma2: np.ndarray
    alpha: float
    omega: float
    lam: float
    eta: float

    @property
    def mean_inv_b(self) -> float:
        return invgamma_mean_inv(self.alpha, self.omega)

    @property
    def mean_inv_b2(self) -> float:
        return invgamma_mean_inv_sq(self.alpha, self.omega)

    @property
    def mean_inv_s2(self) -> float:
        return invgamma_mean_inv(self.lam, self.eta)

    def residuals(self, data: ClusteredDataset) -> np.ndarray:
        """E[y_ij - X_ij' beta - gamma_i] under q."""
        return data.y - data.X @ self.mu - self.tau[data.cluster]


@dataclass(frozen=True, eq=False)
class Coefficients:
    """Per-observation approximation coefficients for one sweep."""

    rho: np.ndarray
    zeta: np.ndarray
    phi: np.ndarray


@dataclass(eq=False)
class FitResult:
    state: VariationalState
    elbo_trace: list[float]
    iterations: int
    converged: bool
    delta_used: float
    event_count: int
    hyper: Hyperparameters | None = None
    labels: tuple = field(default=())


def init_state(data: ClusteredDataset, hyper: Hyperparameters) -> VariationalState:
    """Starting point: mu = mu0, Sigma = I / v0, tau = 0, omega = omega0, eta = eta0.

    alpha and lambda are fixed by the data and never change afterwards.
    sigma2_i starts at eta0 / lambda, i.e. 1 / E[1/s2] at the initial q(s2).
    """
    if hyper.p != data.p:
        raise ValueError(f"mu0 has length {hyper.p} but the data have p = {data.p} covariates")
    alpha = hyper.alpha0 + data.event_count
    lam = hyper.lambda0 + data.K / 2.0
    return VariationalState(
        mu=np.asarray(hyper.mu0, dtype=float).copy(),
        Sigma=np.eye(data.p) / hyper.v0,
        tau=np.zeros(data.K),
        sigma2=np.full(data.K, hyper.eta0 / lam),
        alpha=alpha,
        omega=hyper.omega0,
        lam=lam,
        eta=hyper.eta0,
    )


def plugin_coefficients(
    data: ClusteredDataset, state: VariationalState, inv_scale: float | None = None
) -> Coefficients:
    """Coefficients at z = E[residual] * inv_scale (default E[1/b] under q)."""
    if inv_scale is None:
        inv_scale = state.mean_inv_b
    z = state.residuals(data) * inv_scale
    rho, zeta = quad_coeffs_array(z)
    return Coefficients(rho=rho, zeta=zeta, phi=lin_coeff_array(z))


def _weights(data, coeffs):
    d = data.event.astype(float)
    w2 = (1.0 + d) * coeffs.zeta
    lin = -d + (1.0 + d) * coeffs.rho
    return d, w2, lin


def update_beta(
    data: ClusteredDataset,
    hyper: Hyperparameters,
    state: VariationalState,
    coeffs: Coefficients,
    iteration: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Optimal q(beta) = N(mu, Sigma) given the other factors.

    Sigma^{-1} = v0 I + 2 E[1/b^2] sum (1 + d) zeta X X'
    mu         = Sigma (v0 mu0 + sum [E[1/b](-d + (1 + d) rho)
                                      + 2 E[1/b^2](1 + d) zeta (y - tau)] X)
    """
    _, w2, lin = _weights(data, coeffs)
    eb, eb2 = state.mean_inv_b, state.mean_inv_b2
    X = data.X
    precision = hyper.v0 * np.eye(data.p) + 2.0 * eb2 * (X.T * w2) @ X
    r = eb * lin + 2.0 * eb2 * w2 * (data.y - state.tau[data.cluster])
    rhs = hyper.v0 * np.asarray(hyper.mu0) + X.T @ r
    try:
        factor = linalg.cho_factor(precision, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure("update_beta", iteration, f"precision not positive definite ({exc})") from exc
    mu = linalg.cho_solve(factor, rhs)
    Sigma = linalg.cho_solve(factor, np.eye(data.p))
    Sigma = 0.5 * (Sigma + Sigma.T)
    return Sigma, mu


def update_gammas(
    data: ClusteredDataset,
    hyper: Hyperparameters,
    state: VariationalState,
    coeffs: Coefficients,
) -> tuple[np.ndarray, np.ndarray]:
    """Optimal q(gamma_i) for every cluster at once.

    Clusters are conditionally independent given the other blocks, so the
    vectorised result equals updating them one after another.
    """
    _, w2, lin = _weights(data, coeffs)
    eb, eb2 = state.mean_inv_b, state.mean_inv_b2
    sigma2 = 1.0 / (state.mean_inv_s2 + 2.0 * eb2 * data.cluster_sum(w2))
    r = eb * lin + 2.0 * eb2 * w2 * (data.y - data.X @ state.mu)
    tau = sigma2 * data.cluster_sum(r)
    return tau, sigma2


def update_gamma(
    data: ClusteredDataset,
    hyper: Hyperparameters,
    state: VariationalState,
    i: int,
    coeffs: Coefficients,
) -> tuple[float, float]:
    """Optimal q(gamma_i) = N(tau_i, sigma2_i) for a single cluster ``i``."""
    mask = data.cluster == i
    d = data.event[mask].astype(float)
    w2 = (1.0 + d) * coeffs.zeta[mask]
    lin = -d + (1.0 + d) * coeffs.rho[mask]
    eb, eb2 = state.mean_inv_b, state.mean_inv_b2
    sigma2 = 1.0 / (state.mean_inv_s2 + 2.0 * eb2 * w2.sum())
    resid = data.y[mask] - data.X[mask] @ state.mu
    tau = sigma2 * float(np.sum(eb * lin + 2.0 * eb2 * w2 * resid))
    return tau, sigma2


def update_b(
    data: ClusteredDataset,
    hyper: Hyperparameters,
    state: VariationalState,
    coeffs: Coefficients,
    iteration: int | None = None,
) -> float:
    """Scale of q(b) = InvGamma(alpha, omega).

    omega = omega0 - sum (d - (1 + d) phi) (y - X' mu - tau).  The formula
    does not guarantee positivity; a non-positive value is raised rather
    than clamped.
    """
    d = data.event.astype(float)
    omega = hyper.omega0 - float(np.sum((d - (1.0 + d) * coeffs.phi) * state.residuals(data)))
    if not (omega > 0.0 and math.isfinite(omega)):
        raise NumericalFailure("update_b", iteration, f"omega = {omega!r} is not positive")
    return omega


def update_sigma_gamma(hyper: Hyperparameters, state: VariationalState) -> float:
    """eta = eta0 + 1/2 sum_i E[gamma_i^2], with E[gamma_i^2] = tau_i^2 + sigma2_i."""
    return hyper.eta0 + 0.5 * float(np.sum(state.tau**2 + state.sigma2))


def elbo_terms(
    data: ClusteredDataset,
    hyper: Hyperparameters,
    state: VariationalState,
    coeffs: Coefficients | None = None,
    surrogate: Surrogate = "linear",
) -> dict[str, float]:
    """The ELBO split into the likelihood term and the four prior-minus-entropy terms.

    Constants (p/2, K/2, log Gamma(alpha), log Gamma(lambda), prior
    normalisers) are dropped.  ``surrogate`` selects which softplus
    approximation the likelihood term uses: ``"linear"`` (phi) is the one the
    q(b) update maximises, ``"quadratic"`` (rho, zeta) the one the q(beta) and
    q(gamma) updates maximise.
    """
    if coeffs is None:
        coeffs = plugin_coefficients(data, state)
    d = data.event.astype(float)
    n_events = float(d.sum())
    e_log_b = invgamma_mean_log(state.alpha, state.omega)
    eb = state.mean_inv_b
    resid = state.residuals(data)

    if surrogate == "linear":
        lik = -n_events * e_log_b + eb * float(np.sum((d - (1.0 + d) * coeffs.phi) * resid))
    elif surrogate == "quadratic":
        eb2 = state.mean_inv_b2
        # E[u^2] = (E u)^2 + x' Sigma x + sigma2_i
        var_u = np.einsum("ij,jk,ik->i", data.X, state.Sigma, data.X) + state.sigma2[data.cluster]
        second = resid**2 + var_u
        lik = -n_events * e_log_b + float(
            np.sum(d * eb * resid - (1.0 + d) * (coeffs.rho * eb * resid + coeffs.zeta * eb2 * second))
        )
    else:
        raise ValueError(f"unknown surrogate {surrogate!r}")

    dev = state.mu - np.asarray(hyper.mu0)
    sign, logdet = np.linalg.slogdet(state.Sigma)
    if sign <= 0:
        raise NumericalFailure("compute_elbo", None, "Sigma is not positive definite")
    diff_beta = -0.5 * hyper.v0 * (float(np.trace(state.Sigma)) + float(dev @ dev)) + 0.5 * logdet

    e_log_s2 = invgamma_mean_log(state.lam, state.eta)
    es2 = state.mean_inv_s2
    e_gamma_sq = state.tau**2 + state.sigma2
    diff_gamma = (
        -0.5 * data.K * e_log_s2
        - 0.5 * es2 * float(e_gamma_sq.sum())
        + 0.5 * float(np.sum(np.log(state.sigma2)))
    )

    diff_b = (
        (state.alpha - hyper.alpha0) * e_log_b
        + (state.omega - hyper.omega0) * eb
        - state.alpha * math.log(state.omega)
    )
    diff_s2 = (
        (state.lam - hyper.lambda0) * e_log_s2
        + (state.eta - hyper.eta0) * es2
        - state.lam * math.log(state.eta)
    )
    return {
        "likelihood": lik,
        "diff_beta": diff_beta,
        "diff_gamma": diff_gamma,
        "diff_b": diff_b,
        "diff_sigma2_gamma": diff_s2,
    }


def compute_elbo(
    data: ClusteredDataset,
    hyper: Hyperparameters,
    state: VariationalState,
    coeffs: Coefficients | None = None,
    surrogate: Surrogate = "linear",
) -> float:
    """ELBO up to an additive constant; see :func:`elbo_terms`."""
    terms = elbo_terms(data, hyper, state, coeffs, surrogate)
    return math.fsum(terms.values())


def sweep(
    data: ClusteredDataset,
    hyper: Hyperparameters,
    state: VariationalState,
    iteration: int | None = None,
    inv_scale: float | None = None,
) -> VariationalState:
    """One pass of the four block updates, refreshing coefficients before each.

    ``inv_scale`` overrides E[1/b] in the plug-in residuals for the beta,
    gamma and b blocks (used while q(b) is still at its initial value).
    """
    coeffs = plugin_coefficients(data, state, inv_scale)
    Sigma, mu = update_beta(data, hyper, state, coeffs, iteration)
    state = replace(state, Sigma=Sigma, mu=mu)
    coeffs = plugin_coefficients(data, state, inv_scale)
    tau, sigma2 = update_gammas(data, hyper, state, coeffs)
    state = replace(state, tau=tau, sigma2=sigma2)
    coeffs = plugin_coefficients(data, state, inv_scale)
    state = replace(state, omega=update_b(data, hyper, state, coeffs, iteration))
    return replace(state, eta=update_sigma_gamma(hyper, state))


def fit(
    data: ClusteredDataset,
    hyper: Hyperparameters,
    delta: float = 0.01,
    max_iter: int = 100,
) -> FitResult:
    """Run CAVI until the absolute ELBO change is at most ``delta`` or ``max_iter`` sweeps.

    The ELBO of each sweep uses the linear surrogate with coefficients at the
    end-of-sweep plug-in point.  The first sweep never counts as converged
    unless ``delta`` is infinite, since there is no previous ELBO to compare.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    state = init_state(data, hyper)
    trace: list[float] = []
    converged = False
    for m in range(1, max_iter + 1):
        inv_scale = hyper.alpha0 / hyper.omega0 if m == 1 else None
        state = sweep(data, hyper, state, iteration=m, inv_scale=inv_scale)
        elbo = compute_elbo(data, hyper, state)
        if not math.isfinite(elbo):
            raise NumericalFailure("compute_elbo", m, f"ELBO = {elbo!r}")
        prev = trace[-1] if trace else None
        trace.append(elbo)
        if prev is None:
            if math.isinf(delta):
                converged = True
                break
        elif abs(elbo - prev) <= delta:
            converged = True
            break
    return FitResult(
        state=state,
        elbo_trace=trace,
        iterations=len(trace),
        converged=converged,
        delta_used=delta,
        event_count=data.event_count,
        hyper=hyper,
        labels=data.labels,
    )
