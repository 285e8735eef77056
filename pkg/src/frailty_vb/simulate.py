"""Simulation study: clustered log-logistic data, replicate fits, and bias/SD/MSE/coverage."""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cavi import NumericalFailure, fit
from .data import ClusteredDataset, Hyperparameters
from .summary import summarize

__all__ = [
    "ScenarioSpec",
    "ParameterMetrics",
    "ReplicateMetrics",
    "PARAMETERS",
    "generate_dataset",
    "replicate_rng",
    "run_replicates",
    "scenario_grid",
    "aggregate",
    "worker_count",
]

log = logging.getLogger(__name__)

PARAMETERS = ("beta1", "beta2", "b", "sigma2_gamma")
GRID_K = (15, 30, 50, 80)
GRID_N = (5, 15, 30, 50)

# stream roles for the per-replicate generators
_ROLE_COVARIATES, _ROLE_FRAILTY, _ROLE_NOISE, _ROLE_CENSOR = range(4)


@dataclass(frozen=True)
class ScenarioSpec:
    K: int
    n: int
    beta_true: tuple[float, ...] = (0.5, 0.2, 0.8)
    b_true: float = 0.8
    sigma2_true: float = 1.0
    censor_upper: float = 48.0
    seed: int = 0
    replicates: int = 100

    def __post_init__(self):
        if self.K < 1 or self.n < 1:
            raise ValueError("K and n must be at least 1")
        if len(self.beta_true) != 3:
            raise ValueError("beta_true must be (intercept, beta1, beta2)")
        if self.b_true <= 0 or self.censor_upper <= 0 or self.sigma2_true < 0:
            raise ValueError("b_true and censor_upper must be positive, sigma2_true non-negative")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")

    def truth(self) -> dict[str, float]:
        return {
            "beta1": self.beta_true[1],
            "beta2": self.beta_true[2],
            "b": self.b_true,
            "sigma2_gamma": self.sigma2_true,
        }


def replicate_rng(seed: int, replicate: int, role: int) -> np.random.Generator:
    """Independent generator keyed by (seed, replicate, role)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(replicate, role))
    return np.random.Generator(np.random.PCG64(ss))


def _draw(spec: ScenarioSpec, replicate: int):
    K, n = spec.K, spec.n
    size = K * n
    g = replicate_rng(spec.seed, replicate, _ROLE_COVARIATES)
    x1 = g.normal(1.0, 0.2, size)
    x2 = (g.random(size) < 0.5).astype(float)
    gamma = replicate_rng(spec.seed, replicate, _ROLE_FRAILTY).normal(0.0, 1.0, K) * math.sqrt(spec.sigma2_true)
    u = replicate_rng(spec.seed, replicate, _ROLE_NOISE).random(size)
    eps = np.log(u) - np.log1p(-u)
    C = replicate_rng(spec.seed, replicate, _ROLE_CENSOR).uniform(0.0, spec.censor_upper, size)
    cluster = np.repeat(np.arange(K), n)
    b0, b1, b2 = spec.beta_true
    log_T = b0 + b1 * x1 + b2 * x2 + gamma[cluster] + spec.b_true * eps
    return x1, x2, gamma, log_T, C, cluster


def generate_dataset(spec: ScenarioSpec, replicate_index: int) -> ClusteredDataset:
    """Draw one replicate.

    x1 ~ N(1, 0.2^2), x2 ~ Bernoulli(0.5), eps ~ Logistic(0, 1),
    gamma_i ~ N(0, sigma2_true), C ~ U(0, d); t = min(T, C), event = T <= C.
    """
    x1, x2, _, log_T, C, cluster = _draw(spec, replicate_index)
    T = np.exp(log_T)
    event = T <= C
    t = np.where(event, T, C)
    X = np.column_stack([np.ones_like(x1), x1, x2])
    return ClusteredDataset(
        time=t, event=event, X=X, cluster=cluster.astype(np.intp), labels=tuple(range(spec.K))
    )


@dataclass(frozen=True)
class ParameterMetrics:
    bias: float
    sd: float | None
    mse: float
    cr: float


@dataclass
class ReplicateMetrics:
    spec: ScenarioSpec
    metrics: dict[str, ParameterMetrics]
    estimates: dict[str, np.ndarray]
    covered: dict[str, np.ndarray]
    seconds: list[float] = field(default_factory=list)
    failures: int = 0
    iterations: list[int] = field(default_factory=list)
    nonconverged: int = 0

    @property
    def total_seconds(self) -> float:
        return float(sum(self.seconds))


def aggregate(estimates: np.ndarray, covered: np.ndarray, truth: float) -> ParameterMetrics:
    """Empirical bias, sample SD (ddof=1), MSE and coverage rate."""
    est = np.asarray(estimates, dtype=float)
    N = est.size
    err = est - truth
    sd = float(np.std(est, ddof=1)) if N > 1 else None
    return ParameterMetrics(
        bias=float(err.mean()),
        sd=sd,
        mse=float(np.mean(err**2)),
        cr=float(np.count_nonzero(covered)) / N,
    )


def _one_replicate(args):
    spec, hyper, delta, max_iter, r = args
    data = generate_dataset(spec, r)
    start = time.perf_counter()
    try:
        res = fit(data, hyper, delta=delta, max_iter=max_iter)
    except NumericalFailure as exc:
        return r, None, time.perf_counter() - start, str(exc)
    summ = summarize(res)
    elapsed = time.perf_counter() - start
    ests = {
        "beta1": summ.beta[1],
        "beta2": summ.beta[2],
        "b": summ.b,
        "sigma2_gamma": summ.sigma2_gamma,
    }
    return r, (ests, res.iterations, res.converged), elapsed, None


def worker_count() -> int:
    """Worker processes: FRAILTY_VB_THREADS if set, else the CPU count."""
    cap = os.environ.get("FRAILTY_VB_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap))) if int(cap) > 0 else 1
    return max(1, n)


def run_replicates(
    spec: ScenarioSpec,
    hyper: Hyperparameters | None = None,
    delta: float = 0.01,
    max_iter: int = 100,
    workers: int | None = None,
) -> ReplicateMetrics:
    """Generate, fit and summarise ``spec.replicates`` datasets, then aggregate.

    Failed fits are logged and excluded; their number is reported in
    ``failures``.  Results are collected by replicate index, so they do not
    depend on scheduling.
    """
    hyper = hyper or Hyperparameters.weak(3)
    workers = worker_count() if workers is None else workers
    jobs = [(spec, hyper, delta, max_iter, r) for r in range(spec.replicates)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_one_replicate, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        outputs = [_one_replicate(j) for j in jobs]
    outputs.sort(key=lambda o: o[0])

    truth = spec.truth()
    est = {k: [] for k in PARAMETERS}
    cov = {k: [] for k in PARAMETERS}
    seconds, iterations = [], []
    failures = nonconverged = 0
    for r, payload, elapsed, err in outputs:
        seconds.append(elapsed)
        if payload is None:
            failures += 1
            log.warning("replicate %d failed: %s", r, err)
            continue
        ests, iters, converged = payload
        iterations.append(iters)
        nonconverged += not converged
        for k in PARAMETERS:
            e = ests[k]
            est[k].append(e.mean if e.available else math.nan)
            cov[k].append(e.covers(truth[k]))
    estimates = {k: np.asarray(v, dtype=float) for k, v in est.items()}
    covered = {k: np.asarray(v, dtype=bool) for k, v in cov.items()}
    if failures == spec.replicates:
        raise RuntimeError(f"all {failures} replicates failed for K={spec.K}, n={spec.n}")
    metrics = {k: aggregate(estimates[k], covered[k], truth[k]) for k in PARAMETERS}
    return ReplicateMetrics(
        spec=spec,
        metrics=metrics,
        estimates=estimates,
        covered=covered,
        seconds=seconds,
        failures=failures,
        iterations=iterations,
        nonconverged=nonconverged,
    )


def scenario_grid(
    K_set=GRID_K,
    n_set=GRID_N,
    hyper: Hyperparameters | None = None,
    delta: float = 0.01,
    max_iter: int = 100,
    workers: int | None = None,
    **spec_kwargs,
) -> dict[tuple[int, int], ReplicateMetrics]:
    """run_replicates over the K x n cross product, keyed by (K, n)."""
    out = {}
    for K in K_set:
        for n in n_set:
            spec = ScenarioSpec(K=K, n=n, **spec_kwargs)
            out[(K, n)] = run_replicates(spec, hyper, delta, max_iter, workers)
    return out
