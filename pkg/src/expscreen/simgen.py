"""Seeded generators for synthetic designs, signals and noise."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np


class DesignKind(str, Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    RANK_RESTRICTED_RADEMACHER = "rank_restricted_rademacher"
    DIAGONAL = "diagonal"


@dataclass(frozen=True)
class DesignSpec:
    kind: DesignKind
    n: int
    M: int
    r_tilde: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DesignKind(self.kind))
        if self.n < 1 or self.M < 1:
            raise ValueError("n and M must be >= 1")
        if self.kind is DesignKind.RANK_RESTRICTED_RADEMACHER:
            if self.r_tilde is None or not 1 <= self.r_tilde <= min(self.n, self.M):
                raise ValueError("rank-restricted design needs 1 <= r_tilde <= min(n, M)")
        if self.kind is DesignKind.DIAGONAL and self.n != self.M:
            raise ValueError("diagonal design needs M == n")


def derive_seed(root: int, *keys: int) -> int:
    """Order-independent child seed for ``(root, *keys)``.

    Replication ``r`` of experiment ``e`` uses ``derive_seed(root, e, r, ...)``
    no matter which worker runs it or in which order.
    """
    ss = np.random.SeedSequence([int(root), *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def generate_design(spec: DesignSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    n, M = spec.n, spec.M
    if spec.kind is DesignKind.GAUSSIAN:
        return rng.standard_normal((n, M))
    if spec.kind is DesignKind.RADEMACHER:
        return rng.choice(np.array([-1.0, 1.0]), size=(n, M))
    if spec.kind is DesignKind.RANK_RESTRICTED_RADEMACHER:
        r = spec.r_tilde
        X = np.zeros((n, M))
        X[:r] = rng.choice(np.array([-1.0, 1.0]), size=(r, M)) * math.sqrt(n / r)
        return X
    return math.sqrt(n) * np.eye(n)


def generate_signal(M: int, S: int) -> np.ndarray:
    """``theta*_j = 1(j <= S)``."""
    if not 1 <= S <= M:
        raise ValueError("need 1 <= S <= M")
    theta = np.zeros(M)
    theta[:S] = 1.0
    return theta


def default_sigma2(S: int) -> float:
    return S / 9.0


def generate_response(X: np.ndarray, theta_star: np.ndarray, sigma2: float, seed) -> np.ndarray:
    """``Y = X theta* + sigma xi`` with standard Gaussian ``xi``."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    mean = X @ theta_star
    xi = np.random.default_rng(seed).standard_normal(X.shape[0])
    return mean + math.sqrt(sigma2) * xi


def generate_sequence_model(theta: np.ndarray, n: int, seed) -> np.ndarray:
    """``y_i = theta_i + eps_i / sqrt(n)``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (n,):
        raise ValueError("theta must have length n")
    return theta + np.random.default_rng(seed).standard_normal(n) / math.sqrt(n)
