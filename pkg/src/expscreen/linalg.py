"""Least-squares machinery over sparsity patterns.

Everything here works with the raw sums of squares ``|Y - X theta|_2^2``;
the empirical norm (divide by ``n``) is applied by callers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import scipy.linalg

RANK_TOL = 1e-10
# relative residual norm below which an added column counts as (nearly) dependent
# and the factorization switches to from-scratch SVD solves
DEPENDENCE_TOL = 1e-7
COLUMN_NORM_TOL = 1e-8


@dataclass
class DesignProblem:
    """Design matrix ``X`` (n x M), response ``Y`` and noise variance.

    ``sigma2`` may be ``None`` when the variance is unknown (see
    ``expscreen.sampler.estimate_sigma2``).
    """

    X: np.ndarray
    Y: np.ndarray
    sigma2: Optional[float] = None
    theta_star: Optional[np.ndarray] = None
    mean: Optional[np.ndarray] = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.asarray(self.Y, dtype=float).reshape(-1)
        n, M = self.X.shape
        if n < 1 or M < 1:
            raise ValueError(f"design must have n >= 1 and M >= 1, got {self.X.shape}")
        if self.Y.shape[0] != n:
            raise ValueError(f"Y has length {self.Y.shape[0]}, X has {n} rows")
        if self.sigma2 is not None:
            self.sigma2 = float(self.sigma2)
            if not self.sigma2 > 0:
                raise ValueError("sigma2 must be positive")
        if self.theta_star is not None:
            self.theta_star = np.asarray(self.theta_star, dtype=float).reshape(-1)
            if self.theta_star.shape[0] != M:
                raise ValueError("theta_star must have length M")
            if self.mean is None:
                self.mean = self.X @ self.theta_star
        if self.mean is not None:
            self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
            if self.mean.shape[0] != n:
                raise ValueError("mean must have length n")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def M(self) -> int:
        return self.X.shape[1]

    def column_norms(self) -> np.ndarray:
        """Empirical norms ``||f_j|| = sqrt(mean_i X_ij^2)``."""
        return np.sqrt(np.mean(self.X**2, axis=0))

    def check_column_norms(self, tol: float = COLUMN_NORM_TOL) -> bool:
        """Warn (never raise) when some ``||f_j|| > 1``."""
        worst = float(self.column_norms().max())
        if worst**2 > 1 + tol:
            warnings.warn(
                f"max column norm ||f_j|| = {worst:.4g} exceeds 1; "
                "the dictionary normalization assumption does not hold",
                stacklevel=2,
            )
            return False
        return True

    def with_response(self, Y: np.ndarray) -> "DesignProblem":
        return DesignProblem(self.X, Y, self.sigma2, self.theta_star, self.mean)

    def with_sigma2(self, sigma2: Optional[float]) -> "DesignProblem":
        return DesignProblem(self.X, self.Y, sigma2, self.theta_star, self.mean)


class SparsityPattern:
    """Binary vector of length ``M``.

    Hashable; ``key`` is the integer bitmask with bit ``j`` set when column
    ``j`` is in the pattern.
    """

    __slots__ = ("bits", "size", "_key")

    def __init__(self, bits):
        b = np.asarray(bits).astype(bool).reshape(-1)
        b.setflags(write=False)
        self.bits = b
        self.size = int(b.sum())
        self._key = None

    @classmethod
    def empty(cls, M: int) -> "SparsityPattern":
        return cls(np.zeros(M, dtype=bool))

    @classmethod
    def full(cls, M: int) -> "SparsityPattern":
        return cls(np.ones(M, dtype=bool))

    @classmethod
    def from_support(cls, M: int, support: Iterable[int]) -> "SparsityPattern":
        b = np.zeros(M, dtype=bool)
        b[list(support)] = True
        return cls(b)

    @property
    def M(self) -> int:
        return self.bits.shape[0]

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    @property
    def key(self) -> int:
        if self._key is None:
            self._key = sum(1 << int(j) for j in self.support)
        return self._key

    def flip(self, j: int) -> "SparsityPattern":
        b = self.bits.copy()
        b[j] = not b[j]
        return SparsityPattern(b)

    def hamming(self, other: "SparsityPattern") -> int:
        return int(np.count_nonzero(self.bits != other.bits))

    def __len__(self):
        return self.M

    def __eq__(self, other):
        return isinstance(other, SparsityPattern) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.M, self.key))

    def __repr__(self):
        return f"SparsityPattern(M={self.M}, support={self.support.tolist()})"


def as_pattern(p, M: Optional[int] = None) -> SparsityPattern:
    if isinstance(p, SparsityPattern):
        return p
    p = np.asarray(p)
    if p.dtype == bool or (M is None):
        return SparsityPattern(p)
    return SparsityPattern.from_support(M, p)


@dataclass
class PatternFit:
    theta: np.ndarray
    rss: float
    r_p: int


def _min_norm_lstsq(A: np.ndarray, y: np.ndarray, rank_tol: float):
    """Minimum-norm least squares via SVD; returns (coef, rank)."""
    if A.shape[1] == 0:
        return np.zeros(0), 0
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros(A.shape[1]), 0
    r = int(np.count_nonzero(s > rank_tol * s[0]))
    coef = Vt[:r].T @ ((U[:, :r].T @ y) / s[:r])
    return coef, r


def restricted_least_squares(
    problem: DesignProblem, p, rank_tol: float = RANK_TOL
) -> PatternFit:
    """Minimum-norm least-squares fit with support restricted to ``p``."""
    pat = as_pattern(p, problem.M)
    theta = np.zeros(problem.M)
    idx = pat.support
    if idx.size == 0:
        return PatternFit(theta, float(problem.Y @ problem.Y), 0)
    coef, r = _min_norm_lstsq(problem.X[:, idx], problem.Y, rank_tol)
    theta[idx] = coef
    return PatternFit(theta, rss_of(problem, theta), r)


def rank_of_design(problem_or_X, rank_tol: float = RANK_TOL) -> int:
    X = problem_or_X.X if isinstance(problem_or_X, DesignProblem) else np.asarray(problem_or_X)
    s = np.linalg.svd(X, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rank_tol * s[0]))


def rss_of(problem: DesignProblem, theta: np.ndarray) -> float:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (problem.M,):
        raise ValueError(f"theta must have shape ({problem.M},), got {theta.shape}")
    r = problem.Y - problem.X @ theta
    return float(r @ r)


@dataclass
class PatternFactorization:
    """Thin QR factorization of ``X[:, cols]`` kept in sync with a pattern.

    Single-column additions and removals are O(n k) rank-one updates
    (Gram-Schmidt with reorthogonalization for additions, Givens downdates
    for removals).  The factorization is rebuilt from scratch every
    ``refactor_every`` updates.  Patterns whose columns are (numerically)
    dependent are handled in *degenerate* mode, where every fit is a
    from-scratch SVD solve.
    """

    problem: DesignProblem
    pattern: Optional[SparsityPattern] = None
    rank_tol: float = RANK_TOL
    refactor_every: int = 250
    cols: list = field(init=False)
    degenerate: bool = field(init=False, default=False)
    n_updates: int = field(init=False, default=0)
    n_refactorizations: int = field(init=False, default=0)

    def __post_init__(self):
        self._X = self.problem.X
        self._Y = self.problem.Y
        self._xnorm = np.sqrt(np.sum(self._X**2, axis=0))
        bits = (
            np.zeros(self.problem.M, dtype=bool)
            if self.pattern is None
            else as_pattern(self.pattern, self.problem.M).bits.copy()
        )
        self._bits = bits
        self.cols = [int(j) for j in np.flatnonzero(bits)]
        self.refactorize()

    # -- state -------------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.cols)

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    def contains(self, j: int) -> bool:
        return bool(self._bits[j])

    def refactorize(self):
        n = self.problem.n
        self.n_updates = 0
        self.n_refactorizations += 1
        self._coef = None
        self._dfit = None
        k = len(self.cols)
        if k == 0:
            self.degenerate = False
            self._Q = np.zeros((n, 0))
            self._R = np.zeros((0, 0))
            self._resid = self._Y.copy()
            self._rss = float(self._resid @ self._resid)
            return
        A = self._X[:, self.cols]
        if k <= n:
            Q, R = np.linalg.qr(A)
            d = np.abs(np.diag(R))
            if d.min() > DEPENDENCE_TOL * max(d.max(), 1e-300):
                self.degenerate = False
                self._Q, self._R = Q, R
                self._resid = self._Y - Q @ (Q.T @ self._Y)
                self._rss = float(self._resid @ self._resid)
                return
        self._enter_degenerate()

    def _enter_degenerate(self):
        self.degenerate = True
        self._Q = self._R = None
        self._dfit = restricted_least_squares(self.problem, self._bits, self.rank_tol)
        self._rss = self._dfit.rss
        self._resid = None

    @property
    def rss(self) -> float:
        return self._rss

    def fit(self) -> PatternFit:
        if self.degenerate:
            f = self._dfit
            return PatternFit(f.theta.copy(), f.rss, f.r_p)
        theta = np.zeros(self.problem.M)
        if self.cols:
            theta[self.cols] = self._coefficients()
        return PatternFit(theta, self._rss, len(self.cols))

    def _coefficients(self) -> np.ndarray:
        if self._coef is None:
            self._coef = scipy.linalg.solve_triangular(self._R, self._Q.T @ self._Y)
        return self._coef

    # -- proposals (no commit) ---------------------------------------------

    def _orthogonal_part(self, j: int):
        x = self._X[:, j]
        Q = self._Q
        c = Q.T @ x
        z = x - Q @ c
        c2 = Q.T @ z
        z -= Q @ c2
        return z, c + c2

    def peek_rss(self, j: int) -> float:
        """Residual sum of squares after flipping column ``j``, without committing."""
        if self.degenerate:
            return restricted_least_squares(
                self.problem, _flipped(self._bits, j), self.rank_tol
            ).rss
        if self._bits[j]:
            i = self.cols.index(j)
            coef = self._coefficients()
            e = np.zeros(len(self.cols))
            e[i] = 1.0
            w = scipy.linalg.solve_triangular(self._R, e, trans="T")
            return self._rss + coef[i] ** 2 / float(w @ w)
        if self.size >= self.problem.n:
            return restricted_least_squares(
                self.problem, _flipped(self._bits, j), self.rank_tol
            ).rss
        z, _ = self._orthogonal_part(j)
        rho = float(np.sqrt(z @ z))
        if rho <= DEPENDENCE_TOL * self._xnorm[j]:
            return self._rss
        q = z / rho
        r = self._resid - (q @ self._resid) * q
        return float(r @ r)

    # -- commits -------------------------------------------------------------

    def add(self, j: int):
        if self._bits[j]:
            raise ValueError(f"column {j} already in pattern")
        self._bits[j] = True
        self.cols.append(int(j))
        self._coef = None
        if self.degenerate or self.size > self.problem.n:
            self._enter_degenerate()
            return
        z, c = self._orthogonal_part(j)
        rho = float(np.sqrt(z @ z))
        if rho <= DEPENDENCE_TOL * self._xnorm[j]:
            self._enter_degenerate()
            return
        q = z / rho
        k = self.size - 1
        R = np.zeros((k + 1, k + 1))
        R[:k, :k] = self._R
        R[:k, k] = c
        R[k, k] = rho
        self._R = R
        self._Q = np.column_stack([self._Q, q])
        self._resid = self._resid - (q @ self._resid) * q
        self._rss = float(self._resid @ self._resid)
        self._tick()

    def remove(self, j: int):
        if not self._bits[j]:
            raise ValueError(f"column {j} not in pattern")
        i = self.cols.index(j)
        self._bits[j] = False
        del self.cols[i]
        self._coef = None
        if self.degenerate:
            # leaving degenerate mode may be possible; decide from scratch
            self.refactorize()
            return
        R = np.delete(self._R, i, axis=1)
        Q = self._Q.copy()
        k = R.shape[0]
        for l in range(i, k - 1):
            a, b = R[l, l], R[l + 1, l]
            h = np.hypot(a, b)
            if h == 0.0:
                continue
            cs, sn = a / h, b / h
            rl = R[l, l:].copy()
            R[l, l:] = cs * rl + sn * R[l + 1, l:]
            R[l + 1, l:] = -sn * rl + cs * R[l + 1, l:]
            ql = Q[:, l].copy()
            Q[:, l] = cs * ql + sn * Q[:, l + 1]
            Q[:, l + 1] = -sn * ql + cs * Q[:, l + 1]
        dropped = Q[:, k - 1]
        self._R = np.triu(R[: k - 1, :])
        self._Q = Q[:, : k - 1]
        self._resid = self._resid + (dropped @ self._Y) * dropped
        self._rss = float(self._resid @ self._resid)
        self._tick()

    def flip(self, j: int):
        if self._bits[j]:
            self.remove(j)
        else:
            self.add(j)

    def _tick(self):
        self.n_updates += 1
        if self.n_updates >= self.refactor_every:
            self.refactorize()


def _flipped(bits: np.ndarray, j: int) -> np.ndarray:
    b = bits.copy()
    b[j] = not b[j]
    return b


def incremental_refit(
    state: PatternFactorization, flip: int, direction: str
) -> PatternFit:
    """Apply a single-coordinate change to ``state`` and return the new fit."""
    if direction == "add":
        state.add(flip)
    elif direction == "remove":
        state.remove(flip)
    else:
        raise ValueError(f"direction must be 'add' or 'remove', got {direction!r}")
    return state.fit()
