"""Rate functions for sparsity oracle inequalities and aggregation.

Each rate is a minimum of several branches.  ``*_branches`` functions return
the individual branch values (``inf`` for a branch that is undefined at the
given arguments) so that monotonicity can be checked branchwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Optional

import numpy as np

E = math.e
INF = math.inf


@dataclass(frozen=True)
class RateQuery:
    n: int
    M: int
    R: int
    sigma: float
    s: int = 0
    l1: float = 0.0
    D: Optional[int] = None

    def __post_init__(self):
        if self.n < 1 or self.M < 1:
            raise ValueError("n and M must be >= 1")
        if not 1 <= self.R <= min(self.M, self.n):
            raise ValueError("need 1 <= R <= min(M, n)")
        if not 0 <= self.s <= self.M:
            raise ValueError("need 0 <= s <= M")
        if self.l1 < 0:
            raise ValueError("l1 must be nonnegative")
        if self.D is not None and not 1 <= self.D <= self.M:
            raise ValueError("need 1 <= D <= M")

    @classmethod
    def from_theta(cls, theta, n: int, R: int, sigma: float, D: Optional[int] = None) -> "RateQuery":
        theta = np.asarray(theta, dtype=float)
        return cls(n, theta.size, R, sigma, int(np.count_nonzero(theta)), float(np.abs(theta).sum()), D)


def rank_branch(q: RateQuery) -> float:
    return q.sigma**2 * q.R / q.n


def sparsity_branch(q: RateQuery, c: float = 9.0) -> float:
    """``c sigma^2 s / n * log(1 + e M / (s v 1))``."""
    return c * q.sigma**2 * q.s / q.n * math.log(1 + E * q.M / max(q.s, 1))


def _log1p_ratio(a: float, b: float) -> float:
    """``log(1 + a / b)`` for positive ``a, b`` without overflow of the ratio."""
    return float(np.logaddexp(0.0, math.log(a) - math.log(b)))


def l1_branch(q: RateQuery, c: float = 11.0, inner: float = 3.0) -> float:
    """``c sigma l1 / sqrt(n) * sqrt(log(1 + inner e M sigma / (l1 sqrt n)))``; ``inf`` at ``l1 = 0``."""
    if q.l1 == 0:
        return INF
    rn = math.sqrt(q.n)
    L = _log1p_ratio(inner * E * q.M * q.sigma, q.l1 * rn)
    return c * q.sigma * q.l1 / rn * math.sqrt(L)


def phi_branches(q: RateQuery) -> tuple:
    return (rank_branch(q), sparsity_branch(q), l1_branch(q))


def phi(q: RateQuery) -> float:
    if q.s == 0 and q.l1 == 0:
        return 0.0
    return min(phi_branches(q))


def psi_branches(q: RateQuery) -> tuple:
    return phi_branches(q) + (4.0 * q.l1**2,)


def psi(q: RateQuery) -> float:
    if q.s == 0 and q.l1 == 0:
        return 0.0
    return min(psi_branches(q))


def zeta_branches(q: RateQuery) -> tuple:
    if q.s < 1 or q.l1 <= 0:
        raise ValueError("zeta needs s >= 1 and l1 = delta > 0")
    return (
        rank_branch(q),
        q.sigma**2 * q.s / q.n * math.log(1 + E * q.M / q.s),
        l1_branch(q, c=1.0, inner=1.0),
        q.l1**2,
    )


def zeta(q: RateQuery) -> float:
    """Minimax lower-bound rate for ``M(theta) <= S`` and ``|theta|_1 <= delta``."""
    return min(zeta_branches(q))


def m_star(delta: float, n: int, M: int, sigma: float) -> int:
    """Largest ``m >= 1`` with ``m <= delta sqrt(n) / (sigma sqrt(log(1 + e M / m)))``, else 0."""
    bound = delta * math.sqrt(n) / sigma
    best = 0
    for m in range(1, int(math.ceil(bound)) + 1):
        if m <= bound / math.sqrt(math.log(1 + E * M / m)):
            best = m
    return best


def psi01(theta, n: int) -> float:
    """Keep-or-kill oracle risk scaled by ``2 log n`` (diagonal model)."""
    theta = np.asarray(theta, dtype=float)
    return 2.0 * math.log(n) * (1.0 / n + float(np.minimum(theta**2, 1.0 / n).sum()))


def psi_star(theta, n: int) -> float:
    theta = np.asarray(theta, dtype=float)
    l1 = float(np.abs(theta).sum())
    k = int(np.count_nonzero(theta))
    return min(k * math.log(n) / n, l1 * math.sqrt(math.log(n) / n), l1**2) + 1.0 / n


class AggregationKind(str, Enum):
    MS = "MS"
    C = "C"
    L = "L"
    L_D = "L_D"
    C_D = "C_D"


def aggregation_rate(kind, q: RateQuery) -> float:
    """Optimal remainder for model-selection, convex, linear, subset and D-convex aggregation."""
    kind = AggregationKind(kind)
    s2, n, M = q.sigma**2, q.n, q.M
    rank = rank_branch(q)
    if kind is AggregationKind.MS:
        return min(rank, s2 * math.log(M) / n)
    if kind is AggregationKind.L:
        return rank
    convex = math.sqrt(s2 / n * math.log(1 + E * M * q.sigma / math.sqrt(n)))
    if kind is AggregationKind.C:
        return min(rank, convex)
    if q.D is None:
        raise ValueError(f"aggregation kind {kind.value} needs D")
    subset = s2 * q.D / n * math.log(1 + E * M / q.D)
    if kind is AggregationKind.L_D:
        return min(rank, subset)
    return min(rank, convex, subset)


# -- constants of the oracle inequalities ------------------------------------


def soi_remainder(sigma: float, n: int) -> float:
    """Additive constant ``8 sigma^2 log 2 / n``."""
    return 8.0 * sigma**2 * math.log(2.0) / n


def soi_remainder_l1(sigma: float, n: int, M: int) -> float:
    """Additive constant ``sigma^2 / n (9 log(1 + e M) + 8 log 2)`` of the l0/l1 bound."""
    return sigma**2 / n * (9.0 * math.log(1 + E * M) + 8.0 * math.log(2.0))


def soi_rate(q: RateQuery) -> float:
    """``(sigma^2 R / n) ^ (9 sigma^2 M(theta) / n) log(1 + e M / (M(theta) v 1))``."""
    return min(rank_branch(q), sparsity_branch(q))


# -- randomized sparsification -----------------------------------------------


def maurey_sparsify(theta_star, k: int, seed=None, size: Optional[int] = None) -> np.ndarray:
    """Random ``K``-sparse vector with the same l1 norm and mean ``theta_star``.

    ``K = min(k, M(theta_star))``.  Draws multinomial counts with cell
    probabilities ``|theta_j| / |theta|_1``; returns one vector, or an array
    of ``size`` draws when ``size`` is given.  ``seed`` may be an int or a
    ``numpy.random.Generator``.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    l1 = float(np.abs(theta_star).sum())
    if l1 == 0:
        raise ValueError("theta_star must be nonzero")
    if k < 1:
        raise ValueError("k must be >= 1")
    K = min(int(k), int(np.count_nonzero(theta_star)))
    rng = np.random.default_rng(seed)
    p = np.abs(theta_star) / l1
    counts = rng.multinomial(K, p, size=size)
    return counts * (np.sign(theta_star) * l1 / K)


# -- rate-domination check ----------------------------------------------------

MAUREY_CONSTANT = 3.0 + 1.0 / E


def varphi_bar(theta, X: np.ndarray, eta: np.ndarray, nu: float) -> float:
    """Data-dependent l1 rate dominating the l0 penalty ``nu^2 M(theta)/n log(1 + eM/M(theta))``.

    Uses ``min(L, |theta|_1^2)`` when ``<f_theta, eta> <= ||f_theta||^2`` and
    ``L + nu^2 log(1 + eM) / (c n)`` otherwise, where ``L`` is the l1 branch
    with constant ``nu`` and ``c = 3 + 1/e``.
    """
    theta = np.asarray(theta, dtype=float)
    n, M = X.shape
    l1 = float(np.abs(theta).sum())
    if l1 == 0:
        return 0.0
    rn = math.sqrt(n)
    L = nu * l1 / rn * math.sqrt(_log1p_ratio(E * M * nu, l1 * rn))
    f = X @ theta
    if float(f @ eta) <= float(f @ f):
        return min(L, l1**2)
    return L + nu**2 * math.log(1 + E * M) / (MAUREY_CONSTANT * n)


def l0_penalized_risk(X: np.ndarray, eta: np.ndarray, nu: float) -> float:
    """``min_theta ||f_theta - eta||^2 + nu^2 M(theta)/n log(1 + eM/(M(theta) v 1))``, by enumeration."""
    n, M = X.shape
    best = float(eta @ eta) / n
    for k in range(1, M + 1):
        pen = nu**2 * k / n * math.log(1 + E * M / k)
        for idx in combinations(range(M), k):
            A = X[:, idx]
            coef, *_ = np.linalg.lstsq(A, eta, rcond=None)
            r = eta - A @ coef
            best = min(best, float(r @ r) / n + pen)
    return best
