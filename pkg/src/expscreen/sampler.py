"""Exponential Screening: exact aggregation and the hypercube Metropolis chain."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import (
    RANK_TOL,
    DesignProblem,
    PatternFactorization,
    _min_norm_lstsq,
    as_pattern,
    rank_of_design,
    restricted_least_squares,
)
from .priors import (
    NEG_INF,
    PriorKind,
    PriorSpec,
    log_normalizer,
    log_prior,
    log_prior_of_size,
    log_prior_ratio_sizes,
    support_patterns,
)

ENUMERATION_CAP = 2**20
DEFAULT_T0 = 3000
DEFAULT_T = 7000


@dataclass
class EsEstimate:
    theta: np.ndarray
    mode: str  # "exact" or "mh"
    log_evidence: Optional[float] = None
    log_nu: Optional[np.ndarray] = None
    acceptance_rate: Optional[float] = None
    visited_pattern_count: Optional[int] = None
    trace_size: Optional[np.ndarray] = None
    trace_rss: Optional[np.ndarray] = None
    trace_key: Optional[np.ndarray] = None  # pattern bitmask per iteration (M <= 62 only)
    T0: Optional[int] = None
    T: Optional[int] = None
    seed: Optional[int] = None

    @property
    def weights(self) -> Optional[np.ndarray]:
        """Normalized aggregation weights (exact mode, support enumeration order)."""
        if self.log_nu is None:
            return None
        return np.exp(self.log_nu - self.log_evidence)


def default_prior(problem: DesignProblem, kind=PriorKind.FULL, rank_tol=RANK_TOL) -> PriorSpec:
    return PriorSpec(kind, problem.M, max(rank_of_design(problem, rank_tol), 1))


def _require_sigma2(problem: DesignProblem) -> float:
    if problem.sigma2 is None:
        raise ValueError("problem.sigma2 is required; use estimate_sigma2 when it is unknown")
    return problem.sigma2


def gibbs_log_weight(problem: DesignProblem, p, spec: PriorSpec, rss: float = None) -> float:
    """Unnormalized log weight ``-rss/(4 sigma^2) - |p|/2 + log prior(p)``."""
    sigma2 = _require_sigma2(problem)
    pat = as_pattern(p, problem.M)
    lp = log_prior(spec, pat)
    if lp == NEG_INF:
        return NEG_INF
    if rss is None:
        rss = restricted_least_squares(problem, pat).rss
    return -rss / (4.0 * sigma2) - pat.size / 2.0 + lp


def exact_es(
    problem: DesignProblem,
    spec: Optional[PriorSpec] = None,
    enumeration_cap: int = ENUMERATION_CAP,
    rank_tol: float = RANK_TOL,
) -> EsEstimate:
    """Exact exponentially weighted aggregate over every pattern in the prior support."""
    sigma2 = _require_sigma2(problem)
    if spec is None:
        spec = default_prior(problem, PriorKind.FULL, rank_tol)
    count = spec.support_count()
    if count > enumeration_cap:
        raise ValueError(
            f"prior support has {count} patterns, above enumeration_cap={enumeration_cap}"
        )
    M = problem.M
    log_h = log_normalizer(spec)
    log_nu = np.empty(count)
    top = NEG_INF
    acc = np.zeros(M)
    z = 0.0
    for i, idx in enumerate(support_patterns(spec)):
        theta = np.zeros(M)
        if idx:
            cols = list(idx)
            coef, _ = _min_norm_lstsq(problem.X[:, cols], problem.Y, rank_tol)
            theta[cols] = coef
        r = problem.Y - problem.X @ theta
        lw = (
            -float(r @ r) / (4.0 * sigma2)
            - len(idx) / 2.0
            + log_prior_of_size(spec, len(idx), log_h)
        )
        log_nu[i] = lw
        if lw > top:
            scale = math.exp(top - lw) if top > NEG_INF else 0.0
            acc *= scale
            z *= scale
            top = lw
        w = math.exp(lw - top)
        acc += w * theta
        z += w
    return EsEstimate(
        theta=acc / z,
        mode="exact",
        log_evidence=top + math.log(z),
        log_nu=log_nu,
    )


class ExactEsBatch:
    """Exact ES for a fixed design and many responses.

    Pattern pseudo-inverses and range bases are computed once, so that the
    estimator can be evaluated on a batch of responses with a few tensor
    contractions.  Memory is ``O(|support| * n * (M + rank))``.
    """

    def __init__(self, X: np.ndarray, spec: Optional[PriorSpec] = None, rank_tol: float = RANK_TOL):
        X = np.asarray(X, dtype=float)
        n, M = X.shape
        if spec is None:
            spec = PriorSpec(PriorKind.FULL, M, max(rank_of_design(X, rank_tol), 1))
        self.X = X
        self.spec = spec
        pats = list(support_patterns(spec))
        kmax = max(1, min(n, max(len(p) for p in pats)))
        P = len(pats)
        self.pinv = np.zeros((P, M, n))
        self.basis = np.zeros((P, n, kmax))
        self.sizes = np.array([len(p) for p in pats], dtype=float)
        log_h = log_normalizer(spec)
        self.log_prior = np.array([log_prior_of_size(spec, len(p), log_h) for p in pats])
        for i, idx in enumerate(pats):
            if not idx:
                continue
            cols = list(idx)
            U, s, Vt = np.linalg.svd(X[:, cols], full_matrices=False)
            if s[0] == 0:
                continue
            r = int(np.count_nonzero(s > rank_tol * s[0]))
            self.pinv[i][cols] = Vt[:r].T @ (U[:, :r].T / s[:r, None])
            self.basis[i, :, :r] = U[:, :r]

    def log_weights(self, Ys: np.ndarray, sigma2: float) -> np.ndarray:
        Ys = np.atleast_2d(Ys)
        proj = np.einsum("pnk,dn->dpk", self.basis, Ys)
        rss = np.sum(Ys**2, axis=1)[:, None] - np.sum(proj**2, axis=2)
        rss = np.maximum(rss, 0.0)
        return -rss / (4.0 * sigma2) - self.sizes / 2.0 + self.log_prior

    def estimate(self, Ys: np.ndarray, sigma2: float) -> np.ndarray:
        """Return the ES coefficient vectors, one row per response."""
        lw = self.log_weights(Ys, sigma2)
        lw -= lw.max(axis=1, keepdims=True)
        w = np.exp(lw)
        w /= w.sum(axis=1, keepdims=True)
        thetas = np.einsum("pmn,dn->dpm", self.pinv, np.atleast_2d(Ys))
        return np.einsum("dp,dpm->dm", w, thetas)


def mh_es(
    problem: DesignProblem,
    spec: Optional[PriorSpec] = None,
    T0: int = DEFAULT_T0,
    T: int = DEFAULT_T,
    seed: int = 0,
    rank_tol: float = RANK_TOL,
    refactor_every: int = 250,
    cache_limit: int = 500_000,
    keep_trace: bool = True,
) -> EsEstimate:
    """Metropolis-Hastings approximation of ES on the M-hypercube.

    Starts from the empty pattern, proposes a uniformly chosen single-bit
    flip and accepts with probability ``min(1, nu_q / nu_p)``.  The returned
    ``theta`` averages the least-squares fit of the visited pattern over
    iterations ``T0+1 .. T0+T`` (rejections count the current state again).
    """
    sigma2 = _require_sigma2(problem)
    if T < 1 or T0 < 0:
        raise ValueError("need T >= 1 and T0 >= 0")
    if spec is None:
        spec = default_prior(problem, PriorKind.SIMPLIFIED, rank_tol)
    M = problem.M
    n_iter = T0 + T
    if spec.R == 1 and spec.kind is PriorKind.SIMPLIFIED:
        warnings.warn("prior support is the empty pattern only; returning theta = 0", stacklevel=2)

    rng = np.random.default_rng(seed)
    proposals = rng.integers(0, M, size=n_iter)
    log_u = np.log(rng.random(size=n_iter))

    fac = PatternFactorization(problem, None, rank_tol=rank_tol, refactor_every=refactor_every)
    bits = np.zeros(M, dtype=bool)
    key = 0
    size = 0
    rss = fac.rss
    beta = 1.0 / (4.0 * sigma2)
    log_h = log_normalizer(spec)
    R = spec.R
    full_kind = spec.kind is PriorKind.FULL

    rss_cache = {0: rss}
    theta_cache = {}
    visited = {0}
    acc = np.zeros(M)
    dwell = 0
    accepted = 0
    trace_size = np.empty(n_iter, dtype=np.int32) if keep_trace else None
    trace_rss = np.empty(n_iter) if keep_trace else None
    trace_key = np.empty(n_iter, dtype=np.int64) if keep_trace and M <= 62 else None

    def current_theta():
        th = theta_cache.get(key)
        if th is None:
            th = fac.fit().theta
            if len(theta_cache) < cache_limit:
                theta_cache[key] = th
        return th

    for t in range(n_iter):
        j = int(proposals[t])
        adding = not bits[j]
        size_q = size + 1 if adding else size - 1
        if size_q < R:
            in_supp = True
            lp_ratio = log_prior_ratio_sizes(M, size, size_q) if size < R else None
        else:
            in_supp = full_kind and size_q == M
            lp_ratio = None
        if in_supp:
            if lp_ratio is None:
                lp_ratio = log_prior_of_size(spec, size_q, log_h) - log_prior_of_size(spec, size, log_h)
            key_q = key ^ (1 << j)
            rss_q = rss_cache.get(key_q)
            if rss_q is None:
                rss_q = fac.peek_rss(j)
                if len(rss_cache) < cache_limit:
                    rss_cache[key_q] = rss_q
            delta = (rss - rss_q) * beta - (size_q - size) / 2.0 + lp_ratio
            if delta >= 0.0 or log_u[t] < delta:
                if dwell:
                    acc += dwell * current_theta()
                    dwell = 0
                fac.flip(j)
                bits[j] = adding
                key = key_q
                size = size_q
                rss = rss_q
                visited.add(key)
                accepted += 1
        if t >= T0:
            dwell += 1
        if keep_trace:
            trace_size[t] = size
            trace_rss[t] = rss
            if trace_key is not None:
                trace_key[t] = key
    if dwell:
        acc += dwell * current_theta()

    return EsEstimate(
        theta=acc / T,
        mode="mh",
        acceptance_rate=accepted / n_iter,
        visited_pattern_count=len(visited),
        trace_size=trace_size,
        trace_rss=trace_rss,
        trace_key=trace_key,
        T0=T0,
        T=T,
        seed=seed,
    )


def count_selected(theta: np.ndarray, n: int) -> int:
    """``M_n(theta)``: coordinates with ``|theta_j| > 1/n``."""
    return int(np.count_nonzero(np.abs(theta) > 1.0 / n))


def default_sigma2_grid(Y: np.ndarray, num: int = 40, lo: float = 0.05, hi: float = 4.0) -> np.ndarray:
    v = float(np.var(Y, ddof=1)) if len(Y) > 1 else float(np.mean(np.asarray(Y) ** 2))
    if v <= 0:
        v = 1.0
    return np.geomspace(lo * v, hi * v, num)


@dataclass
class Sigma2Estimate:
    sigma2: float
    triggered: bool
    grid: np.ndarray
    residual_estimates: np.ndarray
    es: Optional[EsEstimate] = field(default=None, repr=False)


def estimate_sigma2(
    problem: DesignProblem,
    alpha: float = 1.0,
    sigma2_grid=None,
    T0: int = DEFAULT_T0,
    T: int = DEFAULT_T,
    seed: int = 0,
    spec: Optional[PriorSpec] = None,
) -> Sigma2Estimate:
    """Smallest grid variance whose ES residual variance departs from it by more than ``alpha``.

    For each ``s2`` in ascending order, ES is run with ``sigma2 = s2`` and the
    residual estimate ``|Y - X theta|^2 / (n - M_n(theta))`` is compared with
    ``s2``.  When no grid point triggers, the largest grid value is returned
    with ``triggered = False``.  ``es`` holds the ES fit at the returned value.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    grid = default_sigma2_grid(problem.Y) if sigma2_grid is None else np.asarray(sigma2_grid, float)
    if grid.size == 0:
        raise ValueError("sigma2_grid must be nonempty")
    if np.any(np.diff(grid) <= 0) or np.any(grid <= 0):
        raise ValueError("sigma2_grid must be ascending and positive")
    if spec is None:
        spec = default_prior(problem, PriorKind.SIMPLIFIED)
    n = problem.n
    estimates = np.full(grid.size, np.nan)
    last = None
    for i, s2 in enumerate(grid):
        est = mh_es(problem.with_sigma2(float(s2)), spec, T0=T0, T=T, seed=seed, keep_trace=False)
        last = est
        dof = n - count_selected(est.theta, n)
        if dof <= 0:
            warnings.warn(f"n - M_n(theta) = {dof} at sigma2 = {s2:.4g}; grid point skipped", stacklevel=2)
            continue
        r = problem.Y - problem.X @ est.theta
        estimates[i] = float(r @ r) / dof
        if abs(estimates[i] - s2) > alpha:
            return Sigma2Estimate(float(s2), True, grid, estimates, est)
    return Sigma2Estimate(float(grid[-1]), False, grid, estimates, last)
