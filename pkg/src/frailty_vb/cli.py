"""Command-line interface: ``frailty-vb fit | simulate | verify``.

Exit codes: 0 success, 1 invalid input or numerical failure (or a failed
verification check), 2 fit stopped at max-iter without converging.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import checks
from .cavi import NumericalFailure, fit
from .data import DatasetError, Hyperparameters
from .io import RunConfig, build_fit_report, metrics_csv, read_dataset_csv, timing_csv
from .simulate import GRID_K, GRID_N, ScenarioSpec, run_replicates
from .summary import summarize

EXIT_OK, EXIT_FAILURE, EXIT_MAX_ITER = 0, 1, 2

log = logging.getLogger("frailty_vb")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text}")
    return v


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1; 2 is reserved for non-convergence."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FAILURE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=_positive_float, default=0.01, help="ELBO convergence threshold")
    p.add_argument("--max-iter", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mu0", type=_float_list, default=(0.0,),
                   help="prior mean of beta; one value is repeated for every coefficient")
    p.add_argument("--v0", type=_positive_float, default=0.1, help="prior precision of beta")
    p.add_argument("--alpha0", type=_positive_float, default=3.0)
    p.add_argument("--omega0", type=_positive_float, default=2.0)
    p.add_argument("--lambda0", type=_positive_float, default=3.0)
    p.add_argument("--eta0", type=_positive_float, default=2.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="frailty-vb", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    pf = sub.add_parser("fit", help="fit a CSV dataset")
    pf.add_argument("input", help="CSV with header cluster,time,event,x1,...")
    pf.add_argument("--out", default="fit_report.json", help="JSON report path")
    _add_common(pf)

    ps = sub.add_parser("simulate", help="run the simulation study")
    ps.add_argument("--K", type=_positive_int, default=80)
    ps.add_argument("--n", type=_positive_int, default=50)
    ps.add_argument("--N", type=_positive_int, default=100, help="replicates per scenario")
    ps.add_argument("--d", type=_positive_float, default=48.0, help="censoring times are U(0, d)")
    ps.add_argument("--grid", action="store_true", help="run all 16 (K, n) scenarios")
    ps.add_argument("--beta", type=_float_list, default=(0.5, 0.2, 0.8),
                    help="true (intercept, beta1, beta2)")
    ps.add_argument("--b-true", type=_positive_float, default=0.8)
    ps.add_argument("--sigma2-true", type=float, default=1.0)
    ps.add_argument("--out", default="simulation", help="output directory")
    ps.add_argument("--timing", metavar="PATH", help="also write per-scenario wall-clock times here")
    _add_common(ps)

    pv = sub.add_parser("verify", help="run the built-in verification checks")
    pv.add_argument("--checks", default=",".join(checks.CHECKS),
                    help=f"comma-separated subset of {', '.join(checks.CHECKS)}")
    return parser


def _hyper(args, p: int) -> Hyperparameters:
    mu0 = args.mu0 * p if len(args.mu0) == 1 else args.mu0
    if len(mu0) != p:
        raise DatasetError("bad --mu0", f"{len(mu0)} values for {p} coefficients")
    return Hyperparameters(mu0=mu0, v0=args.v0, alpha0=args.alpha0, omega0=args.omega0,
                           lambda0=args.lambda0, eta0=args.eta0)


def cmd_fit(args) -> int:
    try:
        data = read_dataset_csv(args.input)
        hyper = _hyper(args, data.p)
    except OSError as exc:
        print(f"error: cannot read {args.input}: {exc.strerror}", file=sys.stderr)
        return EXIT_FAILURE
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    config = RunConfig(hyper, args.delta, args.max_iter, args.seed, args.input, args.out)
    start = time.perf_counter()
    try:
        result = fit(data, hyper, delta=args.delta, max_iter=args.max_iter)
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    elapsed = time.perf_counter() - start
    report = build_fit_report(result, summarize(result), data, config, elapsed)
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    print(report.summary_table())
    if not result.converged:
        print(f"warning: no convergence after {result.iterations} iterations", file=sys.stderr)
        return EXIT_MAX_ITER
    return EXIT_OK


def cmd_simulate(args) -> int:
    if len(args.beta) != 3:
        print("error: --beta needs three values", file=sys.stderr)
        return EXIT_FAILURE
    scenarios = [(K, n) for K in GRID_K for n in GRID_N] if args.grid else [(args.K, args.n)]
    hyper = _hyper(args, 3)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    try:
        for K, n in scenarios:
            spec = ScenarioSpec(K=K, n=n, beta_true=args.beta, b_true=args.b_true,
                                sigma2_true=args.sigma2_true, censor_upper=args.d,
                                seed=args.seed, replicates=args.N)
            log.info("scenario K=%d n=%d", K, n)
            results[(K, n)] = run_replicates(spec, hyper, args.delta, args.max_iter)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    # the output directory is left out of the echo so reruns elsewhere compare equal
    config = RunConfig(hyper, args.delta, args.max_iter, args.seed, options={
        "N": args.N, "d": args.d, "grid": args.grid, "beta_true": list(args.beta),
        "b_true": args.b_true, "sigma2_true": args.sigma2_true,
        "scenarios": [list(s) for s in scenarios],
    })
    table = metrics_csv(results)
    (out / "metrics.csv").write_text(table, encoding="utf-8")
    report = {
        "schema_version": 1,
        "config": config.to_dict(),
        "scenarios": [
            {
                "K": K,
                "n": n,
                "failures": rm.failures,
                "nonconverged": rm.nonconverged,
                "iterations": rm.iterations,
                "metrics": {k: vars(m) for k, m in rm.metrics.items()},
            }
            for (K, n), rm in sorted(results.items())
        ],
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    if args.timing:
        Path(args.timing).write_text(timing_csv(results), encoding="utf-8")
    sys.stdout.write(table)
    return EXIT_OK


def cmd_verify(args) -> int:
    names = [c.strip() for c in args.checks.split(",") if c.strip()]
    try:
        results = checks.run_checks(names)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"fit": cmd_fit, "simulate": cmd_simulate, "verify": cmd_verify}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
