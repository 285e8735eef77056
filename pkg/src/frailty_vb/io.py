"""Dataset CSV ingestion, fit reports and metrics tables.

Input CSV layout is ``cluster,time,event,x1,...,x{p-1}`` with a mandatory
header; the intercept column is implicit.  Floats are written with ``repr``,
which is the shortest string that round-trips exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .cavi import FitResult
from .data import ClusteredDataset, DatasetError, Hyperparameters, validate_dataset
from .summary import Estimate, PosteriorSummary

__all__ = [
    "SCHEMA_VERSION",
    "CsvFormatError",
    "RunConfig",
    "FitReport",
    "read_dataset_csv",
    "parse_dataset_csv",
    "dataset_to_csv",
    "write_dataset_csv",
    "build_fit_report",
    "metrics_csv",
    "timing_csv",
]

SCHEMA_VERSION = 1
_FIXED_COLUMNS = ("cluster", "time", "event")


class CsvFormatError(DatasetError):
    """Malformed input CSV; ``line`` is the 1-based line in the file."""

    def __init__(self, reason: str, line: int, detail: str = ""):
        self.line = line
        msg = f"{reason} at line {line}"
        super().__init__(reason, detail)
        self.args = (f"{msg}: {detail}" if detail else msg,)

    def __str__(self) -> str:
        return self.args[0]


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run."""

    hyper: Hyperparameters
    delta: float = 0.01
    max_iter: int = 100
    seed: int = 0
    input_path: str | None = None
    output_path: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def to_dict(self) -> dict:
        h = self.hyper
        return {
            "mu0": list(h.mu0),
            "v0": h.v0,
            "alpha0": h.alpha0,
            "omega0": h.omega0,
            "lambda0": h.lambda0,
            "eta0": h.eta0,
            "delta": _json_float(self.delta),
            "max_iter": self.max_iter,
            "seed": self.seed,
            "input": self.input_path,
            "output": self.output_path,
            "options": dict(self.options),
        }


def _json_float(x: float):
    # JSON has no inf; keep it readable and reversible
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise CsvFormatError(f"invalid {what}", line, repr(text)) from None


def parse_dataset_csv(text: str) -> ClusteredDataset:
    """Parse CSV text into a validated dataset (see module docstring for layout)."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise CsvFormatError("missing header", 1) from None
    if tuple(header[:3]) != _FIXED_COLUMNS:
        raise CsvFormatError("bad header", 1, "expected cluster,time,event,x1,...")
    extra = header[3:]
    if extra != [f"x{j}" for j in range(1, len(extra) + 1)]:
        raise CsvFormatError("bad header", 1, "covariate columns must be x1, x2, ... in order")

    rows = []
    lines = []
    width = len(header)
    for record in reader:
        line = reader.line_num
        if not record or all(not f.strip() for f in record):
            continue
        if len(record) != width:
            raise CsvFormatError("wrong field count", line, f"got {len(record)}, expected {width}")
        label, t, d, *xs = (f.strip() for f in record)
        time = _parse_float(t, "time", line)
        if d not in ("0", "1"):
            raise CsvFormatError("invalid event flag", line, repr(d))
        covs = [1.0] + [_parse_float(x, "covariate", line) for x in xs]
        rows.append((label, time, int(d), covs))
        lines.append(line)
    if not rows:
        raise CsvFormatError("empty input", reader.line_num or 1)
    try:
        return validate_dataset(rows)
    except DatasetError as exc:
        if exc.row is None:
            raise
        raise CsvFormatError(exc.reason, lines[exc.row]) from exc


def read_dataset_csv(path) -> ClusteredDataset:
    return parse_dataset_csv(Path(path).read_text(encoding="utf-8"))


def dataset_to_csv(data: ClusteredDataset) -> str:
    """Serialize back to the input layout; parse_dataset_csv inverts this exactly."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(_FIXED_COLUMNS) + [f"x{j}" for j in range(1, data.p)])
    for k in range(data.n_obs):
        label = data.labels[data.cluster[k]]
        row = [label, repr(float(data.time[k])), int(data.event[k])]
        row += [repr(float(v)) for v in data.X[k, 1:]]
        w.writerow(row)
    return buf.getvalue()


def write_dataset_csv(data: ClusteredDataset, path) -> None:
    Path(path).write_text(dataset_to_csv(data), encoding="utf-8")


@dataclass
class FitReport:
    config: dict
    K: int
    n_obs: int
    p: int
    event_count: int
    iterations: int
    converged: bool
    elbo_trace: list[float]
    beta: list[dict]
    b: dict
    sigma2_gamma: dict
    icc: float | None
    random_effects: list[dict]
    seconds: float
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "FitReport":
        return cls.from_dict(json.loads(text))

    def summary_table(self) -> str:
        lines = [f"{'parameter':<16}{'mean':>12}{'lower':>12}{'upper':>12}"]

        def row(name, e):
            mean = "n/a" if e["mean"] is None else f"{e['mean']:.4f}"
            lines.append(f"{name:<16}{mean:>12}{e['lower']:>12.4f}{e['upper']:>12.4f}")

        for j, e in enumerate(self.beta):
            row(f"beta{j}", e)
        row("b", self.b)
        row("sigma2_gamma", self.sigma2_gamma)
        icc = "n/a" if self.icc is None else f"{self.icc:.4f}"
        lines.append(f"{'icc':<16}{icc:>12}")
        status = "converged" if self.converged else "not converged"
        lines.append(f"K={self.K} n={self.n_obs} events={self.event_count} "
                     f"iterations={self.iterations} ({status})")
        return "\n".join(lines)


def _est(e: Estimate) -> dict:
    return e.to_dict()


def build_fit_report(
    result: FitResult, summary: PosteriorSummary, data: ClusteredDataset, config: RunConfig, seconds: float
) -> FitReport:
    """Assemble the report; random effects are listed in ascending order of their mean."""
    effects = [
        {"cluster": str(label), **_est(e)} for label, e in zip(data.labels, summary.random_effects)
    ]
    effects.sort(key=lambda r: (r["mean"], r["cluster"]))
    return FitReport(
        config=config.to_dict(),
        K=data.K,
        n_obs=data.n_obs,
        p=data.p,
        event_count=result.event_count,
        iterations=result.iterations,
        converged=result.converged,
        elbo_trace=[float(v) for v in result.elbo_trace],
        beta=[_est(e) for e in summary.beta],
        b=_est(summary.b),
        sigma2_gamma=_est(summary.sigma2_gamma),
        icc=summary.icc,
        random_effects=effects,
        seconds=float(seconds),
    )


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def metrics_csv(results) -> str:
    """Table of (K, n, parameter, bias, sd, mse, cr) rows.

    ``results`` maps (K, n) to :class:`~frailty_vb.simulate.ReplicateMetrics`.
    Wall-clock times are kept out of this table so that it is reproducible
    byte for byte; see :func:`timing_csv`.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["K", "n", "parameter", "bias", "sd", "mse", "cr", "replicates", "failures", "nonconverged"])
    for (K, n), rm in sorted(results.items()):
        used = rm.spec.replicates - rm.failures
        for name, m in rm.metrics.items():
            w.writerow([K, n, name, _fmt(m.bias), _fmt(m.sd), _fmt(m.mse), _fmt(m.cr),
                        used, rm.failures, rm.nonconverged])
    return buf.getvalue()


def timing_csv(results) -> str:
    """Per-scenario runtime: (K, n, K*n, replicates, seconds, mean_seconds)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["K", "n", "Kn", "replicates", "seconds", "mean_seconds"])
    for (K, n), rm in sorted(results.items()):
        total = rm.total_seconds
        w.writerow([K, n, K * n, len(rm.seconds), f"{total:.6f}", f"{total / max(1, len(rm.seconds)):.6f}"])
    return buf.getvalue()
