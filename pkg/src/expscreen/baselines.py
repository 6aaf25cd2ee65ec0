"""Comparison estimators: Lasso variants, exhaustive BIC and soft thresholding.

The Lasso objective throughout is ``(1/n) |Y - X theta|_2^2 + lam |theta|_1``
(note: no factor 1/2 on the quadratic term).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Optional

import numba
import numpy as np

from .linalg import RANK_TOL, DesignProblem, _min_norm_lstsq, as_pattern, restricted_least_squares


class LassoConvergenceWarning(UserWarning):
    pass


def default_lasso_lambda(sigma: float, n: int, M: int) -> float:
    """``sigma * sqrt(8 log M / n)``."""
    return sigma * math.sqrt(8.0 * math.log(M) / n)


def default_threshold(sigma: float, n: int, M: int) -> float:
    """Hard threshold ``sigma * sqrt(2 log M / n)`` used by the Lasso-Gauss refit."""
    return sigma * math.sqrt(2.0 * math.log(M) / n)


def lambda_max(X: np.ndarray, Y: np.ndarray) -> float:
    """Smallest penalty for which the Lasso solution is zero."""
    n = X.shape[0]
    return float(2.0 / n * np.max(np.abs(X.T @ Y)))


@dataclass
class LassoConfig:
    lam: Optional[float] = None  # None: sigma * sqrt(8 log M / n)
    max_iters: int = 20000
    tol: float = 1e-8
    cv_folds: int = 10
    lambda_grid: Optional[np.ndarray] = None
    seed: int = 0

    def resolve_lambda(self, problem: DesignProblem) -> float:
        if self.lam is not None:
            return float(self.lam)
        if problem.sigma2 is None:
            raise ValueError("lam not set and problem.sigma2 unknown")
        return default_lasso_lambda(math.sqrt(problem.sigma2), problem.n, problem.M)


@dataclass
class LassoResult:
    theta: np.ndarray
    lam: float
    n_sweeps: int
    kkt_residual: float
    converged: bool
    objective: np.ndarray = field(repr=False)


@numba.njit(cache=True)
def _kkt_residual(X, r, theta, lam):
    n, M = X.shape
    worst = 0.0
    for j in range(M):
        g = 0.0
        for i in range(n):
            g += X[i, j] * r[i]
        g *= 2.0 / n
        if theta[j] == 0.0:
            v = abs(g) - lam
        elif theta[j] > 0.0:
            v = abs(g - lam)
        else:
            v = abs(g + lam)
        if v > worst:
            worst = v
    return worst


@numba.njit(cache=True)
def _cd_sweep(X, theta, r, colsq, lam, active_only):
    n, M = X.shape
    half = lam / 2.0
    for j in range(M):
        gj = colsq[j]
        if gj == 0.0 or (active_only and theta[j] == 0.0):
            continue
        old = theta[j]
        rho = 0.0
        for i in range(n):
            rho += X[i, j] * r[i]
        rho = rho / n + gj * old
        if rho > half:
            new = (rho - half) / gj
        elif rho < -half:
            new = (rho + half) / gj
        else:
            new = 0.0
        if new != old:
            d = new - old
            for i in range(n):
                r[i] -= X[i, j] * d
            theta[j] = new


@numba.njit(cache=True)
def _active_kkt(X, r, theta, lam):
    n, M = X.shape
    worst = 0.0
    for j in range(M):
        if theta[j] == 0.0:
            continue
        g = 0.0
        for i in range(n):
            g += X[i, j] * r[i]
        g *= 2.0 / n
        v = abs(g - lam) if theta[j] > 0.0 else abs(g + lam)
        if v > worst:
            worst = v
    return worst


@numba.njit(cache=True)
def _objective(r, theta, lam):
    obj = 0.0
    for i in range(r.shape[0]):
        obj += r[i] * r[i]
    obj /= r.shape[0]
    for j in range(theta.shape[0]):
        obj += lam * abs(theta[j])
    return obj


@numba.njit(cache=True)
def _cd_lasso(X, theta, r, colsq, lam, max_sweeps, tol, objective):
    """Cyclic coordinate descent with active-set inner passes.

    ``theta`` and ``r = Y - X theta`` are updated in place.  Every pass over
    the coordinates is exact coordinate minimization, so ``objective`` (one
    entry per pass) is non-increasing.
    """
    sweeps = 0
    kkt = _kkt_residual(X, r, theta, lam)
    while kkt > tol and sweeps < max_sweeps:
        _cd_sweep(X, theta, r, colsq, lam, False)
        objective[sweeps] = _objective(r, theta, lam)
        sweeps += 1
        while sweeps < max_sweeps and _active_kkt(X, r, theta, lam) > 0.5 * tol:
            _cd_sweep(X, theta, r, colsq, lam, True)
            objective[sweeps] = _objective(r, theta, lam)
            sweeps += 1
        kkt = _kkt_residual(X, r, theta, lam)
    return sweeps, kkt


def _polish(X, Y, theta, lam, max_steps=None):
    """Active-set refinement on the current support and signs.

    Solves the stationarity equations on the support; when the solution would
    flip a sign, moves only up to the first zero crossing, drops that
    coordinate and repeats.  Each step stays on a face where the objective is
    a convex quadratic minimized at the target, so the objective never
    increases.  Returns ``None`` when nothing could be done.
    """
    n = X.shape[0]
    theta = theta.copy()
    moved = False
    steps = max_steps or theta.size
    for _ in range(steps):
        act = np.flatnonzero(theta)
        if act.size == 0 or act.size > n:
            break
        XA = X[:, act]
        s = np.sign(theta[act])
        try:
            target = np.linalg.solve(XA.T @ XA, XA.T @ Y - 0.5 * n * lam * s)
        except np.linalg.LinAlgError:
            break
        cur = theta[act]
        crossing = np.sign(target) != s
        if not crossing.any():
            theta[act] = target
            return theta
        d = target - cur
        with np.errstate(divide="ignore", invalid="ignore"):
            steps_to_zero = np.where(crossing, -cur / d, np.inf)
        i = int(np.argmin(steps_to_zero))
        theta[act] = cur + steps_to_zero[i] * d
        theta[act[i]] = 0.0
        moved = True
    return theta if moved else None


def lasso_fit(
    problem: DesignProblem,
    cfg: Optional[LassoConfig] = None,
    theta0: Optional[np.ndarray] = None,
    warn: bool = True,
    polish_every: int = 5,
) -> LassoResult:
    """Coordinate-descent Lasso stopped on the KKT (subgradient) residual.

    Every ``polish_every`` passes the stationarity equations are solved
    directly on the current active set; the candidate is kept only when it
    lowers the objective.  This rescues the slow tail of coordinate descent
    at small penalties.
    """
    cfg = cfg or LassoConfig()
    lam = cfg.resolve_lambda(problem)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    X = np.ascontiguousarray(problem.X)
    Y = problem.Y
    theta = np.zeros(problem.M) if theta0 is None else np.array(theta0, dtype=float)
    r = Y - X @ theta
    colsq = np.sum(X**2, axis=0) / problem.n
    history = []
    sweeps = 0
    while True:
        budget = min(polish_every, cfg.max_iters - sweeps)
        objective = np.empty(max(budget, 1))
        done, kkt = _cd_lasso(X, theta, r, colsq, lam, budget, cfg.tol, objective)
        history.append(objective[:done])
        sweeps += done
        if kkt <= cfg.tol or sweeps >= cfg.max_iters:
            break
        cand = _polish(X, Y, theta, lam)
        if cand is not None:
            r_cand = Y - X @ cand
            obj_cand = float(r_cand @ r_cand) / problem.n + lam * float(np.abs(cand).sum())
            if obj_cand <= float(r @ r) / problem.n + lam * float(np.abs(theta).sum()):
                theta[:] = cand
                r[:] = r_cand
                history.append(np.array([obj_cand]))
    converged = kkt <= cfg.tol
    if not converged and warn:
        warnings.warn(
            f"Lasso did not converge in {cfg.max_iters} sweeps (KKT residual {kkt:.3g})",
            LassoConvergenceWarning,
            stacklevel=2,
        )
    return LassoResult(theta, lam, int(sweeps), float(kkt), bool(converged), np.concatenate(history))


def lasso(problem: DesignProblem, cfg: Optional[LassoConfig] = None) -> np.ndarray:
    return lasso_fit(problem, cfg).theta


def lasso_objective(problem: DesignProblem, theta: np.ndarray, lam: float) -> float:
    r = problem.Y - problem.X @ theta
    return float(r @ r) / problem.n + lam * float(np.sum(np.abs(theta)))


def default_lambda_grid(X: np.ndarray, Y: np.ndarray, num: int = 50, ratio: float = 1e-3) -> np.ndarray:
    top = lambda_max(X, Y)
    if top <= 0:
        top = 1.0
    return np.geomspace(top, top * ratio, num)


@dataclass
class LassoCvResult:
    theta: np.ndarray
    lam: float
    lambda_grid: np.ndarray
    cv_error: np.ndarray


def cv_folds(n: int, k: int, seed: int) -> list:
    if not 2 <= k <= n:
        raise ValueError(f"cv_folds must be in [2, n], got {k}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def lasso_cv_fit(problem: DesignProblem, cfg: Optional[LassoConfig] = None) -> LassoCvResult:
    """K-fold cross-validated Lasso: pick the error-minimizing penalty, refit on all data."""
    cfg = cfg or LassoConfig()
    X, Y, n = problem.X, problem.Y, problem.n
    grid = (
        default_lambda_grid(X, Y)
        if cfg.lambda_grid is None
        else np.sort(np.asarray(cfg.lambda_grid, dtype=float))[::-1]
    )
    folds = cv_folds(n, cfg.cv_folds, cfg.seed)
    errors = np.zeros((len(folds), grid.size))
    for f, test in enumerate(folds):
        train = np.setdiff1d(np.arange(n), test)
        sub = DesignProblem(X[train], Y[train])
        theta = None
        for g, lam in enumerate(grid):
            res = lasso_fit(sub, replace(cfg, lam=float(lam)), theta0=theta, warn=False)
            theta = res.theta
            resid = Y[test] - X[test] @ theta
            errors[f, g] = float(resid @ resid) / test.size
    cv_error = errors.mean(axis=0)
    best = int(np.argmin(cv_error))
    theta = lasso_fit(problem, replace(cfg, lam=float(grid[best]))).theta
    return LassoCvResult(theta, float(grid[best]), grid, cv_error)


def lasso_cv(problem: DesignProblem, cfg: Optional[LassoConfig] = None) -> np.ndarray:
    return lasso_cv_fit(problem, cfg).theta


def lasso_gauss(problem: DesignProblem, base: np.ndarray, threshold: float) -> np.ndarray:
    """Least-squares refit on ``{j : |base_j| > threshold}``."""
    base = np.asarray(base, dtype=float)
    if base.shape != (problem.M,):
        raise ValueError("base must have length M")
    keep = np.abs(base) > threshold
    return restricted_least_squares(problem, keep).theta


@dataclass
class BicConfig:
    a: float = 1.0
    exhaustive_cap: int = 2**20

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be positive")


def bic_penalty(k: int, M: int, n: int, sigma2: float, a: float) -> float:
    """``pen(theta)`` as a function of the support size ``k = M(theta)``."""
    if k == 0:
        return 0.0
    L = 2.0 * math.log(math.e * M / max(k, 1))
    return 2.0 * sigma2 / n * (1.0 + (2.0 + a) / (1.0 + a) * math.sqrt(L) + (1.0 + a) / a * L) * k


def bic_criterion(problem: DesignProblem, p, a: float, rank_tol: float = RANK_TOL) -> float:
    pat = as_pattern(p, problem.M)
    fit = restricted_least_squares(problem, pat, rank_tol)
    return fit.rss / problem.n + bic_penalty(pat.size, problem.M, problem.n, problem.sigma2, a)


@dataclass
class BicResult:
    theta: np.ndarray
    support: tuple
    criterion: float


def bic_fit(problem: DesignProblem, cfg: Optional[BicConfig] = None, rank_tol: float = RANK_TOL) -> BicResult:
    """Exhaustive search over all ``2^M`` patterns."""
    cfg = cfg or BicConfig()
    if problem.sigma2 is None:
        raise ValueError("BIC penalty needs problem.sigma2")
    M, n = problem.M, problem.n
    if 2**M > cfg.exhaustive_cap:
        raise ValueError(f"2^M = {2**M} patterns exceeds exhaustive_cap={cfg.exhaustive_cap}")
    X, Y = problem.X, problem.Y
    best = (float(Y @ Y) / n, ())
    best_coef = np.zeros(0)
    for k in range(1, M + 1):
        pen = bic_penalty(k, M, n, problem.sigma2, cfg.a)
        for idx in combinations(range(M), k):
            coef, _ = _min_norm_lstsq(X[:, idx], Y, rank_tol)
            r = Y - X[:, idx] @ coef
            crit = float(r @ r) / n + pen
            if crit < best[0]:
                best = (crit, idx)
                best_coef = coef
    theta = np.zeros(M)
    theta[list(best[1])] = best_coef
    return BicResult(theta, best[1], best[0])


def bic(problem: DesignProblem, cfg: Optional[BicConfig] = None) -> np.ndarray:
    return bic_fit(problem, cfg).theta


def soft_threshold(y, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)
