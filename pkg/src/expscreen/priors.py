"""Sparsity priors over patterns, in log domain.

Both priors put weight proportional to ``(k / (2 e M))**k`` on every pattern of
size ``k < R`` (with ``0**0 = 1``).  The *full* prior additionally puts mass
1/2 on the all-ones pattern; the *simplified* prior does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln, logsumexp

from .linalg import SparsityPattern, as_pattern

NEG_INF = -math.inf
LOG_HALF = math.log(0.5)


class PriorKind(str, Enum):
    FULL = "full"
    SIMPLIFIED = "simplified"


@dataclass(frozen=True)
class PriorSpec:
    """``normalizer`` is ``"exact"`` (mass sums to one over the support) or
    ``"literal"`` (the normalizing sum as written, running up to ``k = R``)."""

    kind: PriorKind
    M: int
    R: int
    normalizer: str = "exact"

    def __post_init__(self):
        object.__setattr__(self, "kind", PriorKind(self.kind))
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if not 1 <= self.R <= self.M:
            raise ValueError(f"R must satisfy 1 <= R <= M, got R={self.R}, M={self.M}")
        if self.normalizer not in ("exact", "literal"):
            raise ValueError("normalizer must be 'exact' or 'literal'")

    def in_support(self, size: int) -> bool:
        if size < self.R:
            return True
        return self.kind is PriorKind.FULL and size == self.M

    def support_count(self) -> int:
        """Number of patterns with positive prior mass."""
        total = sum(math.comb(self.M, k) for k in range(self.R))
        if self.kind is PriorKind.FULL and self.R <= self.M:
            total += 1
        return total


def size_log_weight(k, M: int):
    """``k * log(k / (2 e M))`` with the ``0 * log 0 = 0`` convention."""
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(k > 0, k * (np.log(np.maximum(k, 1.0)) - math.log(2 * math.e * M)), 0.0)
    return out if out.ndim else float(out)


def _log_binom(M: int, k: np.ndarray) -> np.ndarray:
    return gammaln(M + 1) - gammaln(k + 1) - gammaln(M - k + 1)


def log_sub_rank_sum(M: int, upto: int) -> float:
    """``log sum_{k=0}^{upto} C(M, k) (k / (2 e M))**k``."""
    k = np.arange(0, min(upto, M) + 1, dtype=float)
    return float(logsumexp(_log_binom(M, k) + size_log_weight(k, M)))


def log_normalizer(spec: PriorSpec) -> float:
    """Log of the constant dividing ``(k / 2eM)**k`` on the sub-rank part.

    For the full prior this is ``log H`` with the sub-rank part carrying mass
    1/2; for the simplified prior the sub-rank part carries all the mass.
    """
    upto = spec.R - 1 if spec.normalizer == "exact" else spec.R
    s = log_sub_rank_sum(spec.M, upto)
    if spec.kind is PriorKind.FULL:
        return s + math.log(2.0)
    return s


def log_prior(spec: PriorSpec, p) -> float:
    pat = as_pattern(p, spec.M)
    if pat.M != spec.M:
        raise ValueError(f"pattern length {pat.M} != M = {spec.M}")
    return log_prior_of_size(spec, pat.size)


def log_prior_of_size(spec: PriorSpec, size: int, log_h: float = None) -> float:
    if size < spec.R:
        if log_h is None:
            log_h = log_normalizer(spec)
        return size_log_weight(size, spec.M) - log_h
    if spec.kind is PriorKind.FULL and size == spec.M:
        return LOG_HALF
    return NEG_INF


def log_prior_ratio_sizes(M: int, size_p: int, size_q: int) -> float:
    """Closed-form ``log(pi_q / pi_p)`` for neighbours inside the sub-rank part."""
    omega = size_q - size_p
    if size_p == 0:
        return -math.log(2 * math.e * M)
    if size_q == 0:
        return math.log(2 * math.e * M)
    return size_q * math.log1p(omega / size_p) + omega * math.log(size_p / (2 * math.e * M))


def log_prior_ratio_neighbors(spec: PriorSpec, p, q) -> float:
    """``log pi_q - log pi_p`` for hypercube neighbours ``p`` and ``q``."""
    p = as_pattern(p, spec.M)
    q = as_pattern(q, spec.M)
    if p.hamming(q) != 1:
        raise ValueError("p and q must differ in exactly one coordinate")
    if not spec.in_support(p.size):
        raise ValueError("p lies outside the prior support")
    if not spec.in_support(q.size):
        return NEG_INF
    if p.size < spec.R and q.size < spec.R:
        return log_prior_ratio_sizes(spec.M, p.size, q.size)
    # one end is the all-ones pattern of the full prior
    return log_prior_of_size(spec, q.size) - log_prior_of_size(spec, p.size)


def support_patterns(spec: PriorSpec):
    """Iterate over every pattern with positive prior mass (as index tuples)."""
    from itertools import combinations

    for k in range(spec.R):
        yield from combinations(range(spec.M), k)
    if spec.kind is PriorKind.FULL:
        yield tuple(range(spec.M))


def pattern_from_indices(M: int, idx) -> SparsityPattern:
    return SparsityPattern.from_support(M, idx)
