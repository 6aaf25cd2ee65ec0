"""Command-line entry point: ``run``, ``ingest``, ``rates`` and ``estimate``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys

import numpy as np

from . import baselines, harness, rates, sampler

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURES = 2

ESTIMATE_CHOICES = ("es", "es_exact", "lasso", "lasso_cv", "lasso_gauss", "lasso_cv_gauss", "bic")


def _cmd_run(args) -> int:
    cfg = harness.ExperimentConfig.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["root_seed"] = args.seed
    if args.reps is not None:
        changes["replications"] = args.reps
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
    result = harness.run_experiment(cfg, threads=args.threads)
    paths = harness.emit_results(result, args.out, args.format, include_timing=args.timing)
    for p in paths:
        print(p)
    rate = result.failure_rate
    if rate > cfg.max_failure_rate:
        print(f"estimator failure rate {rate:.3f} exceeds {cfg.max_failure_rate}", file=sys.stderr)
        return EXIT_FAILURES
    return EXIT_OK


def _load_problem(args):
    sigma2 = None if args.sigma2 in (None, "auto") else float(args.sigma2)
    try:
        return harness.ingest_csv(
            args.design, args.response, response_column=args.response_column, sigma2=sigma2
        )
    except OSError as exc:
        raise harness.ConfigError(str(exc)) from exc


def _cmd_ingest(args) -> int:
    problem = _load_problem(args)
    print(json.dumps(harness.describe_problem(problem), indent=1))
    return EXIT_OK


def _cmd_rates(args) -> int:
    q = rates.RateQuery(args.n, args.M, args.R, args.sigma, args.s, args.l1, args.D)
    out = {"phi": rates.phi(q), "psi": rates.psi(q)}
    if q.s >= 1 and q.l1 > 0:
        out["zeta"] = rates.zeta(q)
    agg = {}
    for kind in rates.AggregationKind:
        if kind.value in ("L_D", "C_D") and q.D is None:
            continue
        agg[kind.value] = rates.aggregation_rate(kind, q)
    out["aggregation"] = agg
    print(json.dumps(out, indent=1))
    return EXIT_OK


def _cmd_estimate(args) -> int:
    problem = _load_problem(args)
    if args.sigma2 == "auto" or problem.sigma2 is None:
        est = sampler.estimate_sigma2(problem, alpha=args.alpha, T0=args.T0, T=args.T, seed=args.seed)
        problem = problem.with_sigma2(est.sigma2)
    kind = args.estimator
    sigma = math.sqrt(problem.sigma2)
    if kind == "es":
        theta = sampler.mh_es(problem, T0=args.T0, T=args.T, seed=args.seed, keep_trace=False).theta
    elif kind == "es_exact":
        theta = sampler.exact_es(problem).theta
    elif kind == "bic":
        theta = baselines.bic(problem)
    else:
        if kind.startswith("lasso_cv"):
            theta = baselines.lasso_cv(problem, baselines.LassoConfig(seed=args.seed))
        else:
            theta = baselines.lasso(problem)
        if kind.endswith("gauss"):
            theta = baselines.lasso_gauss(problem, theta, baselines.default_threshold(sigma, problem.n, problem.M))
    if args.out:
        np.savetxt(args.out, theta, delimiter=",")
        print(args.out)
    else:
        print(json.dumps({"sigma2": problem.sigma2, "theta": theta.tolist()}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="expscreen", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a replication experiment from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, help="override root_seed")
    run.add_argument("--reps", type=int, help="override replications")
    run.add_argument("--out", default="results")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--timing", action="store_true", help="append wall_time to the records")
    run.set_defaults(func=_cmd_run)

    def data_args(p):
        p.add_argument("--design", required=True)
        p.add_argument("--response", help="one-column response CSV")
        p.add_argument("--response-column", help="response column (name or index) inside the design CSV")
        p.add_argument("--sigma2", help="known noise variance, or 'auto'")

    ing = sub.add_parser("ingest", help="parse a CSV problem and print a dimension report")
    data_args(ing)
    ing.set_defaults(func=_cmd_ingest)

    rt = sub.add_parser("rates", help="evaluate rate functions")
    rt.add_argument("--n", type=int, required=True)
    rt.add_argument("--M", type=int, required=True)
    rt.add_argument("--R", type=int, required=True)
    rt.add_argument("--sigma", type=float, required=True)
    rt.add_argument("--s", type=int, default=0)
    rt.add_argument("--l1", type=float, default=0.0)
    rt.add_argument("--D", type=int)
    rt.set_defaults(func=_cmd_rates)

    est = sub.add_parser("estimate", help="run one estimator on CSV data")
    data_args(est)
    est.add_argument("--estimator", choices=ESTIMATE_CHOICES, default="es")
    est.add_argument("--T0", type=int, default=sampler.DEFAULT_T0)
    est.add_argument("--T", type=int, default=sampler.DEFAULT_T)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--alpha", type=float, default=1.0)
    est.add_argument("--out", help="write theta as CSV here")
    est.set_defaults(func=_cmd_estimate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (harness.ConfigError, harness.CsvFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
