"""Domain types for clustered right-censored survival data."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

__all__ = [
    "DatasetError",
    "Observation",
    "ClusteredDataset",
    "Hyperparameters",
    "validate_dataset",
]


class DatasetError(ValueError):
    """Raised when raw rows cannot form a valid clustered dataset.

    ``reason`` is a short machine-readable tag (e.g. ``"non-positive time"``)
    and ``row`` the zero-based offending row, when there is one.
    """

    def __init__(self, reason: str, detail: str = "", row: int | None = None):
        self.reason = reason
        self.row = row
        msg = reason if not detail else f"{reason}: {detail}"
        super().__init__(msg)


@dataclass(frozen=True)
class Observation:
    cluster: Hashable
    time: float
    event: bool
    covariates: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class ClusteredDataset:
    """Observations plus per-cluster bookkeeping.

    Arrays are row-aligned: ``X[k]``, ``y[k]``, ``event[k]`` and
    ``cluster[k]`` describe observation ``k``.  ``cluster`` holds dense
    indices 0..K-1 assigned in order of first appearance of each label.
    """

    time: np.ndarray
    event: np.ndarray
    X: np.ndarray
    cluster: np.ndarray
    labels: tuple
    y: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "y", np.log(self.time))
        for arr in (self.time, self.event, self.X, self.cluster, self.y):
            arr.setflags(write=False)

    @property
    def K(self) -> int:
        return len(self.labels)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_obs(self) -> int:
        return self.time.shape[0]

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.cluster, minlength=self.K)

    @property
    def event_count(self) -> int:
        return int(self.event.sum())

    def observations(self) -> list[Observation]:
        return [
            Observation(
                cluster=self.labels[c],
                time=float(t),
                event=bool(d),
                covariates=tuple(float(v) for v in x),
            )
            for c, t, d, x in zip(self.cluster, self.time, self.event, self.X)
        ]

    def cluster_sum(self, values: np.ndarray) -> np.ndarray:
        """Sum per-observation ``values`` within each cluster."""
        return np.bincount(self.cluster, weights=values, minlength=self.K)

    @classmethod
    def from_arrays(cls, time, event, X, cluster) -> "ClusteredDataset":
        """Build from arrays, with ``cluster`` given as arbitrary labels."""
        rows = [
            (c, t, d, x)
            for c, t, d, x in zip(list(cluster), np.asarray(time), np.asarray(event), np.asarray(X))
        ]
        return validate_dataset(rows)


def validate_dataset(
    rows: Iterable[tuple[Hashable, float, bool | int, Sequence[float]]],
) -> ClusteredDataset:
    """Check raw ``(cluster label, time, event, covariates)`` rows and index them.

    Covariate rows must start with the intercept entry 1.0.  Cluster labels
    are re-indexed densely in order of first appearance.
    """
    rows = list(rows)
    if not rows:
        raise DatasetError("empty input", "no observations supplied")

    index: dict = {}
    labels: list = []
    times, events, covs, clusters = [], [], [], []
    p = None
    for k, (label, t, d, x) in enumerate(rows):
        t = float(t)
        if not math.isfinite(t) or t <= 0.0:
            raise DatasetError("non-positive time", f"row {k} has time {t!r}", row=k)
        if d not in (0, 1, True, False):
            raise DatasetError("invalid event flag", f"row {k} has event {d!r}", row=k)
        x = [float(v) for v in x]
        if p is None:
            p = len(x)
            if p < 1:
                raise DatasetError("inconsistent covariate length", "covariate rows are empty", row=k)
        elif len(x) != p:
            raise DatasetError(
                "inconsistent covariate length", f"row {k} has {len(x)} entries, expected {p}", row=k
            )
        if x[0] != 1.0:
            raise DatasetError("first covariate not 1", f"row {k} starts with {x[0]!r}", row=k)
        if not all(math.isfinite(v) for v in x):
            raise DatasetError("non-finite covariate", f"row {k}", row=k)
        if label not in index:
            index[label] = len(labels)
            labels.append(label)
        times.append(t)
        events.append(bool(d))
        covs.append(x)
        clusters.append(index[label])

    return ClusteredDataset(
        time=np.asarray(times, dtype=float),
        event=np.asarray(events, dtype=bool),
        X=np.asarray(covs, dtype=float).reshape(len(rows), p),
        cluster=np.asarray(clusters, dtype=np.intp),
        labels=tuple(labels),
    )


@dataclass(frozen=True)
class Hyperparameters:
    """Prior constants.

    beta ~ N(mu0, I / v0); b ~ InvGamma(alpha0, omega0);
    sigma2_gamma ~ InvGamma(lambda0, eta0).
    """

    mu0: tuple[float, ...]
    v0: float = 0.1
    alpha0: float = 3.0
    omega0: float = 2.0
    lambda0: float = 3.0
    eta0: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "mu0", tuple(float(m) for m in self.mu0))
        if len(self.mu0) < 1:
            raise ValueError("mu0 must have at least one entry")
        for name in ("v0", "alpha0", "omega0", "lambda0", "eta0"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be a positive finite number, got {val!r}")

    @property
    def p(self) -> int:
        return len(self.mu0)

    @classmethod
    def weak(cls, p: int) -> "Hyperparameters":
        """The weakly informative defaults: mu0 = 0, v0 = 0.1, alpha0 = lambda0 = 3, omega0 = eta0 = 2."""
        return cls(mu0=(0.0,) * p)
