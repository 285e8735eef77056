"""The self-verification suite behind ``frailty-vb verify``.

Each check returns a :class:`CheckResult`; none of them raises on a failed
comparison, so a full run always reports every check.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .cavi import fit
from .data import ClusteredDataset, Hyperparameters, validate_dataset
from .oracle import (
    GridMassError,
    QuadratureError,
    approx_error_scan,
    frozen_sweep_monotonicity,
    quadrature_invgamma,
    tiny_exact_posterior,
)
from .simulate import ScenarioSpec, generate_dataset
from .special import invgamma_mean_inv, invgamma_mean_inv_sq, invgamma_mean_log

__all__ = [
    "CheckResult",
    "CHECKS",
    "LATTICE_SHAPES",
    "LATTICE_SCALES",
    "SCAN_REFERENCE",
    "designed_tiny_dataset",
    "monotonicity_datasets",
    "check_quadrature",
    "check_approx_error_scan",
    "check_monotonicity",
    "check_tiny_posterior",
    "run_checks",
]

LATTICE_SHAPES = (1.5, 3.0, 12.5, 40.0)
LATTICE_SCALES = (0.5, 2.0, 9.0, 80.0)
QUADRATURE_TOL = 1e-8

# Sup-norm error of each softplus approximation on [-5, 5] (1_000_001 points)
# for the stock coefficient tables, frozen as regression constants.
SCAN_REFERENCE = {
    "linear": (0.6931471805599453, 0.0),
    "quadratic": (0.6996374493783828, -1.0975099999999998),
}
SCAN_TOL = 1e-9

TINY_TOL = 0.15
MONOTONE_DATASETS = 20


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_quadrature() -> CheckResult:
    """Closed-form inverse-gamma moments against adaptive quadrature."""
    closed = {
        "1/b": invgamma_mean_inv,
        "1/b^2": invgamma_mean_inv_sq,
        "log b": invgamma_mean_log,
    }
    worst = 0.0
    try:
        for shape, scale in itertools.product(LATTICE_SHAPES, LATTICE_SCALES):
            for key, f in closed.items():
                worst = max(worst, abs(quadrature_invgamma(shape, scale, key) - f(shape, scale)))
    except QuadratureError as exc:
        return CheckResult("quadrature", False, str(exc))
    return CheckResult("quadrature", worst <= QUADRATURE_TOL, f"max abs diff {worst:.2e} over 16 points")


def check_approx_error_scan() -> CheckResult:
    """Scan both approximations on [-5, 5] and compare with the frozen sup errors."""
    parts, ok = [], True
    for kind, (ref_err, ref_at) in SCAN_REFERENCE.items():
        err, at = approx_error_scan(kind, -5.0, 5.0)
        good = abs(err - ref_err) <= SCAN_TOL and abs(at - ref_at) <= 1e-5
        ok &= good
        parts.append(f"{kind} sup {err:.6f} at z={at:.4f}")
    return CheckResult("approx-error-scan", ok, "; ".join(parts))


def monotonicity_datasets(count: int = MONOTONE_DATASETS, seed: int = 20240) -> list[ClusteredDataset]:
    """Seeded random datasets with K <= 5 clusters of n <= 5 observations."""
    rng = np.random.default_rng(seed)
    out = []
    for r in range(count):
        K, n = (int(v) for v in rng.integers(1, 6, size=2))
        out.append(generate_dataset(ScenarioSpec(K=K, n=n, seed=seed), r))
    return out


def check_monotonicity(sweeps: int = 10) -> CheckResult:
    hyper = Hyperparameters.weak(3)
    worst = 0.0
    for k, data in enumerate(monotonicity_datasets()):
        rep = frozen_sweep_monotonicity(data, hyper, sweeps=sweeps)
        if rep.deltas:
            worst = min(worst, min(d for _, _, d in rep.deltas))
        if not rep.ok:
            return CheckResult("monotonicity", False, f"dataset {k}: block {rep.failed_block} decreased the ELBO")
    return CheckResult("monotonicity", True, f"{MONOTONE_DATASETS} datasets, most negative delta {worst:.2e}")


def designed_tiny_dataset() -> ClusteredDataset:
    """One cluster, intercept only: two events and one censored time."""
    return validate_dataset([("a", 2.0, 1, [1.0]), ("a", 5.0, 1, [1.0]), ("a", 1.2, 0, [1.0])])


def check_tiny_posterior() -> CheckResult:
    data = designed_tiny_dataset()
    hyper = Hyperparameters.weak(1)
    try:
        grid = tiny_exact_posterior(data, hyper)
        fine = tiny_exact_posterior(data, hyper, points=161, s2_points=481)
    except GridMassError as exc:
        return CheckResult("tiny-posterior", False, str(exc))
    problems = []
    if abs(grid.total_mass - 1.0) > 1e-8:
        problems.append(f"grid mass {grid.total_mass!r}")
    shift = max(abs(fine.mean_beta - grid.mean_beta), abs(fine.mean_b - grid.mean_b))
    if shift >= 1e-4:
        problems.append(f"refinement moved means by {shift:.2e}")
    vb = float(fit(data, hyper).state.mu[0])
    gap = abs(vb - grid.mean_beta)
    if gap > TINY_TOL:
        problems.append(f"VB beta {vb:.4f} vs exact {grid.mean_beta:.4f}")
    detail = f"exact beta {grid.mean_beta:.4f}, VB {vb:.4f}, gap {gap:.4f}, refinement shift {shift:.1e}"
    if problems:
        detail += " (" + "; ".join(problems) + ")"
    return CheckResult("tiny-posterior", not problems, detail)


CHECKS = {
    "quadrature": check_quadrature,
    "approx-error-scan": check_approx_error_scan,
    "monotonicity": check_monotonicity,
    "tiny-posterior": check_tiny_posterior,
}


def run_checks(names=None) -> list[CheckResult]:
    names = list(CHECKS) if names is None else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown check(s): {', '.join(unknown)}")
    return [CHECKS[n]() for n in names]
