#!/usr/bin/env python3
"""Prediction/estimation tables for ES and the Lasso baselines.

    python scripts/reproduce_tables.py --reps 50
    python scripts/reproduce_tables.py --shape 200 500 20 --reps 20 --out results/large
"""

from __future__ import annotations

import argparse
import dataclasses
import time

from expscreen import harness, simgen
from expscreen.harness import EstimatorSpec, ExperimentConfig

ESTIMATORS = [
    EstimatorSpec("ES", "es"),
    EstimatorSpec("Lasso", "lasso"),
    EstimatorSpec("LassoCV", "lasso_cv"),
    EstimatorSpec("Lasso-G", "lasso_gauss"),
    EstimatorSpec("LassoCV-G", "lasso_cv_gauss"),
]


def fmt_table(title, result, metric):
    names = [e["estimator"] for e in result.summary]
    head = f"{title:<22}" + "".join(f"{n:>14}" for n in names)
    cells = [f"{e[metric + '_mean']:.3f} ({e[metric + '_sd']:.2f})" for e in result.summary]
    row = " " * 22 + "".join(f"{c:>14}" for c in cells)
    return head + "\n" + row


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--shape", nargs=3, type=int, metavar=("n", "M", "S"), default=(100, 200, 10))
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--designs", nargs="+", default=["gaussian", "rademacher"])
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", help="directory for records/summary CSVs")
    args = ap.parse_args()

    n, M, S = args.shape
    for eid, kind in enumerate(args.designs):
        cfg = ExperimentConfig(
            design=simgen.DesignSpec(kind, n, M), S=S, estimators=ESTIMATORS,
            replications=args.reps, root_seed=args.seed, experiment_id=eid,
            reference_estimator="LassoCV-G", name=f"{kind}-{n}-{M}-{S}",
        )
        t0 = time.perf_counter()
        res = harness.run_experiment(cfg, threads=args.threads)
        print(f"# {cfg.name}: {args.reps} replications in {time.perf_counter() - t0:.0f}s")
        print(fmt_table("|X(th - th*)|^2 / n", res, "pred_error"))
        print(fmt_table("|th - th*|^2", res, "est_error"))
        print(fmt_table("model selection", res, "ms_error"))
        print()
        if args.out:
            harness.emit_results(res, f"{args.out}/{cfg.name}", "csv")


if __name__ == "__main__":
    main()
