"""Independent checks for the variational engine.

Nothing here reuses the closed forms it is meant to check: expectations are
integrated numerically, approximation errors are scanned on dense grids, and
the tiny-instance posterior is computed by brute-force grid integration of
the exact (un-approximated) joint density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from . import approx
from .cavi import (
    NumericalFailure,
    VariationalState,
    compute_elbo,
    init_state,
    plugin_coefficients,
    update_b,
    update_beta,
    update_gammas,
    update_sigma_gamma,
)
from .data import ClusteredDataset, Hyperparameters

__all__ = [
    "QuadratureError",
    "GridMassError",
    "quadrature_invgamma",
    "approx_error_scan",
    "TinyPosteriorGrid",
    "tiny_exact_posterior",
    "MonotonicityReport",
    "BLOCK_SURROGATE",
    "frozen_sweep_monotonicity",
]


class QuadratureError(RuntimeError):
    pass


class GridMassError(RuntimeError):
    """Posterior mass reaches the edge of the integration grid."""

    def __init__(self, msg: str, edge_mass: dict[str, float]):
        super().__init__(msg)
        self.edge_mass = edge_mass


# log |g(b)| as a function of u = log b, and the sign-carrying factor
_INTEGRANDS = {
    "1/b": (lambda u: -u, lambda u: 1.0),
    "1/b^2": (lambda u: -2.0 * u, lambda u: 1.0),
    "log b": (lambda u: 0.0, lambda u: u),
}


def quadrature_invgamma(shape: float, scale: float, integrand: str, tol: float = 1e-10) -> float:
    """E[g(b)] for b ~ InvGamma(shape, scale) by adaptive quadrature.

    ``integrand`` is one of ``"1/b"``, ``"1/b^2"``, ``"log b"``.  The integral is
    taken over u = log b with the density written out from scratch, split
    into pieces around the mode of the transformed density.
    """
    if not (shape > 0 and scale > 0):
        raise ValueError("shape and scale must be positive")
    log_g, factor = _INTEGRANDS[integrand]
    log_norm = shape * math.log(scale) - math.lgamma(shape)

    def f(u):
        # density of u = log b is p(b) * b; computed in logs to avoid 0 * inf
        t = -u + math.log(scale)
        if t > 700.0:
            return 0.0
        return factor(u) * math.exp(log_g(u) + log_norm - shape * u - math.exp(t))

    # split the axis around the mode of log b, in units of its approximate sd
    mode = math.log(scale / shape)
    sd = 1.0 / math.sqrt(shape)
    cuts = [mode + k * sd for k in (-8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0)]
    edges = [-np.inf] + cuts + [np.inf]
    total, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(f, lo, hi, epsabs=tol / 10, epsrel=1e-13, limit=500)
        total += val
        err += e
    if not err <= tol:
        raise QuadratureError(f"quadrature error estimate {err:.3g} exceeds {tol:.3g}")
    return total


def approx_error_scan(kind: str, lo: float, hi: float, points: int = 1_000_001) -> tuple[float, float]:
    """Sup-norm error of a softplus approximation on a uniform grid.

    Returns ``(max_abs_error, argmax)``.  ``kind`` is ``"linear"`` (phi z) or
    ``"quadratic"`` (rho z + zeta z^2).
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    if points < 1000:
        raise ValueError("use at least 1000 grid points")
    z = np.linspace(lo, hi, points)
    if kind == "linear":
        fitted = approx.lin_coeff_array(z) * z
    elif kind == "quadratic":
        rho, zeta = approx.quad_coeffs_array(z)
        fitted = rho * z + zeta * z * z
    else:
        raise ValueError(f"unknown approximation kind {kind!r}")
    err = np.abs(approx.softplus(z) - fitted)
    k = int(np.argmax(err))
    return float(err[k]), float(z[k])


# --------------------------------------------------------------------------
# grid posterior for tiny instances


@dataclass
class TinyPosteriorGrid:
    beta_axis: np.ndarray
    b_axis: np.ndarray
    gamma_axis: np.ndarray
    s2_axis: np.ndarray
    log_post: np.ndarray = field(repr=False)  # over (beta, b, gamma_1, ..., gamma_K)
    log_norm: float
    mean_beta: float
    mean_b: float
    mean_gamma: np.ndarray
    total_mass: float
    edge_mass: dict[str, float]


def _trap_weights(x: np.ndarray) -> np.ndarray:
    w = np.empty_like(x)
    dx = np.diff(x)
    w[0] = dx[0] / 2
    w[-1] = dx[-1] / 2
    w[1:-1] = (dx[:-1] + dx[1:]) / 2
    return w


def _log_gamma_prior(
    gamma_sq_sum: np.ndarray, K: int, hyper: Hyperparameters, s2_axis: np.ndarray, mask=None
):
    """log of prod_i N(gamma_i | 0, s2) integrated against InvGamma(lambda0, eta0) over s2.

    Integration is on u = log s2 with trapezoid weights.  ``mask`` restricts
    the sum to a subset of the s2 axis (used for the edge-mass check).
    """
    u = np.log(s2_axis)
    w = np.log(_trap_weights(u))
    if mask is not None:
        w = np.where(mask, w, -np.inf)
    lam, eta = hyper.lambda0, hyper.eta0
    # log InvGamma density in s2, times jacobian s2
    log_prior = lam * math.log(eta) - math.lgamma(lam) - lam * u - eta / s2_axis
    ss = np.asarray(gamma_sq_sum)[..., None]
    log_lik = -0.5 * K * (math.log(2 * math.pi) + u) - ss / (2 * s2_axis)
    return logsumexp(log_lik + log_prior + w, axis=-1)


def tiny_exact_posterior(
    data: ClusteredDataset,
    hyper: Hyperparameters,
    beta_range: tuple[float, float] | None = None,
    b_range: tuple[float, float] = (0.02, 40.0),
    gamma_range: tuple[float, float] = (-7.0, 7.0),
    s2_range: tuple[float, float] = (1e-3, 1e2),
    points: int = 81,
    s2_points: int = 241,
    edge_tol: float = 1e-3,
) -> TinyPosteriorGrid:
    """Exact posterior means for an intercept-only model with K <= 2, n_i <= 3.

    The joint density uses the true log-logistic likelihood (no softplus
    approximation).  sigma2_gamma is integrated out numerically on a
    log-spaced axis; b is gridded on a log scale.  Raises
    :class:`GridMassError` when more than ``edge_tol`` of the mass sits in the
    outer 5% of any axis.
    """
    if data.p != 1 or data.K > 2 or int(data.counts.max()) > 3:
        raise ValueError("tiny_exact_posterior supports p = 1, K <= 2, n_i <= 3")
    K = data.K
    mu0, v0 = hyper.mu0[0], hyper.v0
    if beta_range is None:
        half = 8.0 / math.sqrt(v0) if v0 < 1 else 8.0
        centre = float(np.mean(data.y))
        beta_range = (centre - half, centre + half)

    beta = np.linspace(*beta_range, points)
    log_b = np.linspace(math.log(b_range[0]), math.log(b_range[1]), points)
    b = np.exp(log_b)
    gam = np.linspace(*gamma_range, points)
    s2 = np.exp(np.linspace(math.log(s2_range[0]), math.log(s2_range[1]), s2_points))

    # axes: beta, b, gamma_1[, gamma_2]
    shape = (points, points) + (points,) * K
    lp = np.zeros(shape)
    lp += (-0.5 * v0 * (beta - mu0) ** 2)[(slice(None),) + (None,) * (K + 1)]
    a0, w0 = hyper.alpha0, hyper.omega0
    # InvGamma prior on b, expressed on log b (jacobian b)
    lp += (a0 * math.log(w0) - math.lgamma(a0) - a0 * log_b - w0 / b)[(None, slice(None)) + (None,) * K]

    grids = np.meshgrid(*([gam] * K), indexing="ij")
    sq = sum(g**2 for g in grids)
    gamma_idx = (None, None) + (slice(None),) * K
    log_gp = _log_gamma_prior(sq, K, hyper, s2)
    lp += log_gp[gamma_idx]

    for y, d, c in zip(data.y, data.event, data.cluster):
        z = (y - beta[:, None, None] - gam[None, None, :]) / b[None, :, None]
        # log-logistic density of log t (event) or survival (censored), up to log t
        ll = float(d) * (z - log_b[None, :, None]) - (1.0 + float(d)) * approx.softplus(z)
        lp += _expand(ll, int(c), K)

    w = _trap_weights(beta)[:, None] * _trap_weights(log_b)[None, :]
    for _ in range(K):
        w = w[..., None] * _trap_weights(gam)
    log_w = np.log(w)
    log_norm = float(logsumexp(lp + log_w))
    post = np.exp(lp + log_w - log_norm)

    total = float(post.sum())
    axes = {"beta": 0, "b": 1}
    axes.update({f"gamma_{i}": 2 + i for i in range(K)})
    edge = {}
    for name, ax in axes.items():
        marg = post.sum(axis=tuple(a for a in range(post.ndim) if a != ax))
        m = max(1, int(round(0.05 * points)))
        edge[name] = float(marg[:m].sum() + marg[-m:].sum())
    # s2 is integrated out, so its edge mass is the share of the s2 integral
    # coming from the outer 5% of its axis
    m = max(1, int(round(0.05 * s2_points)))
    outer = np.zeros(s2_points, dtype=bool)
    outer[:m] = outer[-m:] = True
    log_edge_gp = _log_gamma_prior(sq, K, hyper, s2, mask=outer)
    edge["sigma2_gamma"] = float(np.sum(post * np.exp(log_edge_gp - log_gp)[gamma_idx]))
    if any(v > edge_tol for v in edge.values()):
        raise GridMassError(f"posterior mass at grid edges exceeds {edge_tol}: {edge}", edge)

    mean_beta = float(np.tensordot(post.sum(axis=tuple(range(1, post.ndim))), beta, axes=1))
    marg_b = post.sum(axis=tuple(a for a in range(post.ndim) if a != 1))
    mean_b = float(marg_b @ b)
    mean_gamma = np.array(
        [post.sum(axis=tuple(a for a in range(post.ndim) if a != 2 + i)) @ gam for i in range(K)]
    )
    return TinyPosteriorGrid(
        beta_axis=beta,
        b_axis=b,
        gamma_axis=gam,
        s2_axis=s2,
        log_post=lp,
        log_norm=log_norm,
        mean_beta=mean_beta,
        mean_b=mean_b,
        mean_gamma=mean_gamma,
        total_mass=total,
        edge_mass=edge,
    )


def _expand(ll: np.ndarray, c: int, K: int) -> np.ndarray:
    """Broadcast a (beta, b, gamma_c) array into the (beta, b, gamma_1..gamma_K) grid."""
    idx = (slice(None), slice(None)) + tuple(slice(None) if i == c else None for i in range(K))
    return ll[idx]


# --------------------------------------------------------------------------
# frozen-coefficient monotonicity

#: ELBO surrogate each block update is an exact coordinate maximiser of.
BLOCK_SURROGATE = {
    "beta": "quadratic",
    "gamma": "quadratic",
    "b": "linear",
    "sigma2_gamma": "linear",
}


@dataclass
class MonotonicityReport:
    ok: bool
    deltas: list[tuple[int, str, float]]
    failed_block: str | None = None
    final_state: VariationalState | None = None


def _apply_block(block, data, hyper, state, coeffs):
    if block == "beta":
        Sigma, mu = update_beta(data, hyper, state, coeffs)
        return replace(state, Sigma=Sigma, mu=mu)
    if block == "gamma":
        tau, sigma2 = update_gammas(data, hyper, state, coeffs)
        return replace(state, tau=tau, sigma2=sigma2)
    if block == "b":
        return replace(state, omega=update_b(data, hyper, state, coeffs))
    if block == "sigma2_gamma":
        return replace(state, eta=update_sigma_gamma(hyper, state))
    raise ValueError(block)


def frozen_sweep_monotonicity(
    data: ClusteredDataset,
    hyper: Hyperparameters,
    sweeps: int = 5,
    state: VariationalState | None = None,
    rel_tol: float = 1e-9,
    blocks: tuple[str, ...] = ("beta", "gamma", "b", "sigma2_gamma"),
    refresh: str = "block",
) -> MonotonicityReport:
    """Apply block updates with frozen coefficients and check the ELBO never drops.

    With ``refresh="block"`` (what :func:`fit` does) the coefficients for each
    block are frozen at the plug-in values of the state entering that block;
    with ``refresh="sweep"`` one set is frozen for the whole sweep.  Each delta
    is scored on the surrogate ELBO the block update maximises
    (``BLOCK_SURROGATE``) using the same frozen coefficients; a delta below
    ``-rel_tol * max(1, |ELBO|)`` fails the check, as does an update that
    cannot be applied (omega <= 0).
    """
    if refresh not in ("block", "sweep"):
        raise ValueError("refresh must be 'block' or 'sweep'")
    fresh = state is None
    if state is None:
        state = init_state(data, hyper)
    deltas: list[tuple[int, str, float]] = []
    for s in range(1, sweeps + 1):
        inv_scale = hyper.alpha0 / hyper.omega0 if (fresh and s == 1) else None
        coeffs = plugin_coefficients(data, state, inv_scale)
        for block in blocks:
            if refresh == "block":
                coeffs = plugin_coefficients(data, state, inv_scale)
            surrogate = BLOCK_SURROGATE[block]
            before = compute_elbo(data, hyper, state, coeffs, surrogate)
            try:
                new_state = _apply_block(block, data, hyper, state, coeffs)
            except NumericalFailure:
                return MonotonicityReport(False, deltas, failed_block=block, final_state=state)
            after = compute_elbo(data, hyper, new_state, coeffs, surrogate)
            delta = after - before
            deltas.append((s, block, delta))
            if delta < -rel_tol * max(1.0, abs(before)):
                return MonotonicityReport(False, deltas, failed_block=block, final_state=new_state)
            state = new_state
    return MonotonicityReport(True, deltas, final_state=state)
