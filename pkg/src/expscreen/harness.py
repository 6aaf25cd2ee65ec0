"""Replication runner, metrics, CSV ingestion and result emission."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import baselines, sampler, simgen
from .linalg import DesignProblem, rank_of_design

log = logging.getLogger(__name__)

METRICS = ("pred_error", "est_error", "ms_error")
RECORD_COLUMNS = (
    "experiment",
    "replication",
    "estimator",
    "pred_error",
    "est_error",
    "ms_error",
    "sigma2_used",
    "seed",
    "status",
)
SHAPE_NOTE = (
    "(n, M, S) read as n = sample size, M = dictionary size; "
    "table headers labelled (M, n, S) are interpreted with this ordering"
)

ESTIMATOR_KINDS = ("es", "es_exact", "lasso", "lasso_cv", "lasso_gauss", "lasso_cv_gauss", "bic")


class ConfigError(ValueError):
    pass


# -- metrics -----------------------------------------------------------------


def prediction_error(X: np.ndarray, theta_hat: np.ndarray, theta_star: np.ndarray) -> float:
    d = X @ (np.asarray(theta_hat) - np.asarray(theta_star))
    return float(d @ d) / X.shape[0]


def estimation_error(theta_hat: np.ndarray, theta_star: np.ndarray) -> float:
    d = np.asarray(theta_hat) - np.asarray(theta_star)
    return float(d @ d)


def model_selection_error(theta_hat: np.ndarray, theta_star: np.ndarray, n: int) -> int:
    """Size of the selection symmetric difference.

    Coordinate ``j`` counts when ``|theta_hat_j| > 1/n`` while ``theta*_j == 0``,
    or ``theta_hat_j == 0`` while ``|theta*_j| > 1/n``.  The two sides are
    deliberately asymmetric (threshold on one, exact zero on the other).
    """
    a = np.asarray(theta_hat, dtype=float)
    b = np.asarray(theta_star, dtype=float)
    if a.shape != b.shape:
        raise ValueError("theta_hat and theta_star must have equal length")
    t = 1.0 / n
    wrong_in = (np.abs(a) > t) & (b == 0)
    wrong_out = (a == 0) & (np.abs(b) > t)
    return int(np.count_nonzero(wrong_in) + np.count_nonzero(wrong_out))


def rams(candidate_errors, reference_errors) -> float:
    """Relative average model-selection error; ``nan`` when the reference total is zero."""
    c = np.asarray(candidate_errors, dtype=float)
    r = np.asarray(reference_errors, dtype=float)
    if c.shape != r.shape:
        raise ValueError("candidate and reference need matched replication counts")
    denom = float(r.sum())
    if denom == 0:
        return math.nan
    return float(c.sum()) / denom


# -- configuration -------------------------------------------------------------


@dataclass
class EstimatorSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ConfigError(f"unknown estimator kind {self.kind!r}; expected one of {ESTIMATOR_KINDS}")


def default_estimators() -> list:
    return [
        EstimatorSpec("ES", "es"),
        EstimatorSpec("Lasso", "lasso"),
        EstimatorSpec("LassoCV", "lasso_cv"),
        EstimatorSpec("Lasso-G", "lasso_gauss"),
        EstimatorSpec("LassoCV-G", "lasso_cv_gauss"),
    ]


@dataclass
class ExperimentConfig:
    design: simgen.DesignSpec
    S: int
    sigma2: Union[float, str, None] = None  # None: S / 9; "auto": estimated per replication
    estimators: list = field(default_factory=default_estimators)
    replications: int = 1
    root_seed: int = 0
    experiment_id: int = 0
    T0: int = sampler.DEFAULT_T0
    T: int = sampler.DEFAULT_T
    reference_estimator: Optional[str] = None
    alpha: float = 1.0
    max_failure_rate: float = 0.1
    name: str = "experiment"

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not 1 <= self.S <= self.design.M:
            raise ConfigError("need 1 <= S <= M")
        if isinstance(self.sigma2, str) and self.sigma2 != "auto":
            raise ConfigError("sigma2 must be a positive number, 'auto' or omitted")
        if isinstance(self.sigma2, (int, float)) and not self.sigma2 > 0:
            raise ConfigError("sigma2 must be positive")
        names = [e.name for e in self.estimators]
        if len(set(names)) != len(names):
            raise ConfigError("estimator names must be unique")
        if self.reference_estimator is not None and self.reference_estimator not in names:
            raise ConfigError(f"reference estimator {self.reference_estimator!r} is not configured")

    @property
    def true_sigma2(self) -> float:
        if isinstance(self.sigma2, (int, float)):
            return float(self.sigma2)
        return simgen.default_sigma2(self.S)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            design = d.pop("design")
            design = simgen.DesignSpec(
                kind=design["kind"], n=int(design["n"]), M=int(design["M"]),
                r_tilde=design.get("r_tilde"),
            )
            ests = d.pop("estimators", None)
            if ests is not None:
                d["estimators"] = [
                    EstimatorSpec(e["name"], e.get("kind", e["name"]), e.get("params", {})) for e in ests
                ]
            known = set(cls.__dataclass_fields__) - {"design"}
            unknown = set(d) - known
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            return cls(design=design, **d)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid experiment config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["design"] = {
            "kind": self.design.kind.value, "n": self.design.n, "M": self.design.M,
            "r_tilde": self.design.r_tilde,
        }
        return d


# -- running -----------------------------------------------------------------


@dataclass
class ReplicationRecord:
    experiment: str
    replication: int
    estimator: str
    pred_error: float
    est_error: float
    ms_error: float
    sigma2_used: float
    seed: int
    status: str = "ok"
    wall_time: float = 0.0

    def row(self) -> list:
        return [getattr(self, c) for c in RECORD_COLUMNS]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    summary: list
    metadata: dict

    @property
    def failure_rate(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.status != "ok" for r in self.records) / len(self.records)


# stream ids for derive_seed
_DESIGN, _NOISE, _CHAIN, _FOLDS = range(4)


def replication_problem(cfg: ExperimentConfig, rep: int) -> DesignProblem:
    d = cfg.design
    seed = simgen.derive_seed(cfg.root_seed, cfg.experiment_id, rep, _DESIGN)
    X = simgen.generate_design(simgen.DesignSpec(d.kind, d.n, d.M, d.r_tilde, seed))
    theta = simgen.generate_signal(d.M, cfg.S)
    noise_seed = simgen.derive_seed(cfg.root_seed, cfg.experiment_id, rep, _NOISE)
    Y = simgen.generate_response(X, theta, cfg.true_sigma2, noise_seed)
    sigma2 = None if cfg.sigma2 == "auto" else cfg.true_sigma2
    return DesignProblem(X, Y, sigma2, theta)


def _run_estimator(spec: EstimatorSpec, problem: DesignProblem, cfg: ExperimentConfig, rep: int, cache: dict):
    p = spec.params
    chain_seed = int(p.get("seed", simgen.derive_seed(cfg.root_seed, cfg.experiment_id, rep, _CHAIN)))
    fold_seed = simgen.derive_seed(cfg.root_seed, cfg.experiment_id, rep, _FOLDS)
    sigma = math.sqrt(problem.sigma2)
    kind = spec.kind
    if kind == "es":
        if cache.get("es_auto") is not None and not p:
            return cache["es_auto"]
        return sampler.mh_es(
            problem, T0=int(p.get("T0", cfg.T0)), T=int(p.get("T", cfg.T)), seed=chain_seed, keep_trace=False
        ).theta
    if kind == "es_exact":
        return sampler.exact_es(problem).theta
    if kind in ("lasso", "lasso_gauss"):
        if "lasso" not in cache:
            cache["lasso"] = baselines.lasso(problem, baselines.LassoConfig(lam=p.get("lam")))
        base = cache["lasso"]
    elif kind in ("lasso_cv", "lasso_cv_gauss"):
        if "lasso_cv" not in cache:
            lcfg = baselines.LassoConfig(cv_folds=int(p.get("cv_folds", 10)), seed=fold_seed)
            cache["lasso_cv"] = baselines.lasso_cv(problem, lcfg)
        base = cache["lasso_cv"]
    elif kind == "bic":
        return baselines.bic(problem, baselines.BicConfig(a=float(p.get("a", 1.0))))
    else:  # pragma: no cover - rejected by EstimatorSpec
        raise ConfigError(kind)
    if kind.endswith("gauss"):
        thr = float(p.get("threshold", baselines.default_threshold(sigma, problem.n, problem.M)))
        return baselines.lasso_gauss(problem, base, thr)
    return base


def run_replication(cfg: ExperimentConfig, rep: int) -> list:
    problem = replication_problem(cfg, rep)
    theta_star = problem.theta_star
    cache = {}
    if cfg.sigma2 == "auto":
        est = sampler.estimate_sigma2(
            problem, alpha=cfg.alpha, T0=cfg.T0, T=cfg.T,
            seed=simgen.derive_seed(cfg.root_seed, cfg.experiment_id, rep, _CHAIN),
        )
        problem = problem.with_sigma2(est.sigma2)
        cache["es_auto"] = est.es.theta
    records = []
    seed = simgen.derive_seed(cfg.root_seed, cfg.experiment_id, rep)
    for spec in cfg.estimators:
        t0 = time.perf_counter()
        try:
            theta = _run_estimator(spec, problem, cfg, rep, cache)
            rec = ReplicationRecord(
                cfg.name, rep, spec.name,
                prediction_error(problem.X, theta, theta_star),
                estimation_error(theta, theta_star),
                model_selection_error(theta, theta_star, problem.n),
                problem.sigma2, seed,
            )
        except Exception as exc:  # recorded, not fatal
            log.warning("replication %d, estimator %s failed: %s", rep, spec.name, exc)
            rec = ReplicationRecord(
                cfg.name, rep, spec.name, math.nan, math.nan, math.nan,
                problem.sigma2, seed, status=f"error: {type(exc).__name__}: {exc}",
            )
        rec.wall_time = time.perf_counter() - t0
        records.append(rec)
    return records


def summarize(records: list, reference: Optional[str] = None) -> list:
    names = list(dict.fromkeys(r.estimator for r in records))
    by_name = {nm: [r for r in records if r.estimator == nm and r.status == "ok"] for nm in names}
    out = []
    for nm in names:
        rows = by_name[nm]
        entry = {"estimator": nm, "n_ok": len(rows)}
        for m in METRICS:
            vals = np.array([getattr(r, m) for r in rows], dtype=float)
            entry[f"{m}_mean"] = float(vals.mean()) if vals.size else math.nan
            entry[f"{m}_sd"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        out.append(entry)
    if reference is not None:
        ref = {r.replication: r.ms_error for r in by_name.get(reference, [])}
        for entry in out:
            rows = [r for r in by_name[entry["estimator"]] if r.replication in ref]
            entry["rams"] = rams([r.ms_error for r in rows], [ref[r.replication] for r in rows])
    return out


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Run every replication; output order is replication order regardless of ``threads``."""
    reps = range(cfg.replications)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda r: run_replication(cfg, r), reps))
    else:
        chunks = [run_replication(cfg, r) for r in reps]
    records = [rec for chunk in chunks for rec in chunk]
    metadata = {
        "name": cfg.name,
        "config": cfg.to_dict(),
        "shape_interpretation": SHAPE_NOTE,
        "columns": list(RECORD_COLUMNS),
    }
    return ExperimentResult(cfg, records, summarize(records, cfg.reference_estimator), metadata)


# -- output -------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def emit_results(result: ExperimentResult, out, fmt: str = "csv", include_timing: bool = False) -> list:
    """Write ``records.<fmt>`` (long format) and ``summary.<fmt>`` into directory ``out``.

    Wall times are nondeterministic and therefore only written when
    ``include_timing`` is set (as an extra trailing column/field).
    """
    if fmt not in ("csv", "json"):
        raise ValueError("format must be 'csv' or 'json'")
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    cols = list(RECORD_COLUMNS) + (["wall_time"] if include_timing else [])
    rows = [[getattr(r, c) for c in cols] for r in result.records]
    rec_path = out / f"records.{fmt}"
    sum_path = out / f"summary.{fmt}"
    try:
        if fmt == "csv":
            with open(rec_path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                w.writerows([[_fmt(v) for v in row] for row in rows])
            keys = list(result.summary[0]) if result.summary else []
            with open(sum_path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(keys)
                for entry in result.summary:
                    w.writerow([_fmt(entry[k]) for k in keys])
        else:
            with open(rec_path, "w") as fh:
                json.dump([dict(zip(cols, row)) for row in rows], fh, indent=1)
                fh.write("\n")
            with open(sum_path, "w") as fh:
                json.dump({"metadata": result.metadata, "summary": result.summary}, fh, indent=1)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"failed writing results under {out}: {exc}") from exc
    return [rec_path, sum_path]


# -- external data --------------------------------------------------------------


class CsvFormatError(ValueError):
    pass


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_numeric_csv(path, header="auto"):
    """Return ``(names, matrix)`` from a rectangular numeric CSV.

    ``header="auto"`` treats the first row as a header when any of its cells
    is not a number.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    names = None
    start = 0
    first = [c.strip() for c in rows[0]]
    if header is True or (header == "auto" and not all(_is_number(c) for c in first)):
        names = first
        start = 1
    width = len(rows[start]) if start < len(rows) else len(first)
    data = np.empty((len(rows) - start, width))
    for i, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise CsvFormatError(f"{path}: row {i} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row, start=1):
            try:
                data[i - start - 1, j - 1] = float(cell)
            except ValueError:
                raise CsvFormatError(f"{path}: non-numeric cell {cell!r} at row {i}, column {j}") from None
    if names is not None and len(names) != width:
        raise CsvFormatError(f"{path}: header has {len(names)} names, rows have {width} cells")
    return names, data


def ingest_csv(design_path, response_path=None, response_column=None, sigma2=None, header="auto") -> DesignProblem:
    """Load a design (and response) from CSV.

    Either ``response_path`` names a one-column file, or ``response_column``
    (name or integer index) picks the response out of the design file.
    """
    names, data = read_numeric_csv(design_path, header)
    if response_path is not None:
        _, y = read_numeric_csv(response_path, header)
        if y.shape[1] != 1:
            raise CsvFormatError(f"{response_path}: response file must have one column, found {y.shape[1]}")
        Y = y[:, 0]
        X = data
    else:
        if response_column is None:
            raise CsvFormatError("give response_path or response_column")
        if isinstance(response_column, str) and not response_column.lstrip("-").isdigit():
            if names is None or response_column not in names:
                raise CsvFormatError(f"{design_path}: no column named {response_column!r}")
            col = names.index(response_column)
        else:
            col = int(response_column) % data.shape[1]
        Y = data[:, col]
        X = np.delete(data, col, axis=1)
    if X.shape[0] != Y.shape[0]:
        raise CsvFormatError(f"dimension mismatch: design has {X.shape[0]} rows, response has {Y.shape[0]}")
    problem = DesignProblem(X, Y, sigma2)
    log.info("ingested design n=%d, M=%d", problem.n, problem.M)
    problem.check_column_norms()
    return problem


def describe_problem(problem: DesignProblem) -> dict:
    norms = problem.column_norms()
    return {
        "n": problem.n,
        "M": problem.M,
        "rank": rank_of_design(problem),
        "max_column_norm": float(norms.max()),
        "columns_above_unit_norm": int(np.count_nonzero(norms**2 > 1 + 1e-8)),
        "sigma2": problem.sigma2,
    }


def write_problem_csv(problem: DesignProblem, design_path, response_path, header: bool = True):
    with open(design_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"x{j}" for j in range(problem.M)])
        w.writerows([[repr(float(v)) for v in row] for row in problem.X])
    with open(response_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["y"])
        w.writerows([[repr(float(v))] for v in problem.Y])
