from __future__ import annotations

import math

import numpy as np
import pytest

from expscreen.linalg import DesignProblem, rank_of_design
from expscreen.simgen import (
    DesignKind,
    DesignSpec,
    default_sigma2,
    derive_seed,
    generate_design,
    generate_response,
    generate_sequence_model,
    generate_signal,
)


def test_diagonal_design():
    X = generate_design(DesignSpec("diagonal", 5, 5))
    np.testing.assert_allclose(X.T @ X / 5, np.eye(5), rtol=0, atol=1e-15)


def test_rank_restricted_rademacher():
    X = generate_design(DesignSpec(DesignKind.RANK_RESTRICTED_RADEMACHER, 50, 100, r_tilde=7, seed=3))
    np.testing.assert_allclose(np.sqrt(np.mean(X**2, axis=0)), 1.0, rtol=0, atol=1e-15)
    assert np.all(X[7:] == 0)
    for seed in range(5):
        X = generate_design(DesignSpec("rank_restricted_rademacher", 50, 100, 7, seed))
        assert rank_of_design(X) == 7


def test_gaussian_and_rademacher():
    G = generate_design(DesignSpec("gaussian", 400, 300, seed=1))
    assert abs(G.mean()) < 0.01 and abs(G.var() - 1) < 0.02
    Rm = generate_design(DesignSpec("rademacher", 40, 30, seed=1))
    assert set(np.unique(Rm)) == {-1.0, 1.0}


def test_spec_validation():
    with pytest.raises(ValueError):
        DesignSpec("diagonal", 4, 5)
    with pytest.raises(ValueError):
        DesignSpec("rank_restricted_rademacher", 4, 5)
    with pytest.raises(ValueError):
        DesignSpec("rank_restricted_rademacher", 4, 5, r_tilde=5)
    with pytest.raises(ValueError):
        DesignSpec("sparse", 4, 5)


def test_signal():
    np.testing.assert_array_equal(generate_signal(4, 4), np.ones(4))
    np.testing.assert_array_equal(generate_signal(4, 1), [1, 0, 0, 0])
    for M, S in [(10, 3), (200, 10), (500, 20)]:
        t = generate_signal(M, S)
        assert np.abs(t).sum() == S == np.count_nonzero(t)
    with pytest.raises(ValueError):
        generate_signal(3, 0)


def test_response():
    X = generate_design(DesignSpec("gaussian", 10_000, 3, seed=2))
    theta = np.array([1.0, 0, -1.0])
    np.testing.assert_array_equal(generate_response(X, theta, 0.0, 1), X @ theta)
    Y = generate_response(X, theta, 2.0, 5)
    assert abs(np.var(Y - X @ theta, ddof=1) / 2.0 - 1) < 0.05
    assert default_sigma2(10) == pytest.approx(10 / 9)


def test_sequence_model():
    n = 10_000
    y = generate_sequence_model(np.zeros(n), n, 3)
    assert abs(np.var(y) * n - 1) < 0.05
    np.testing.assert_array_equal(y, generate_sequence_model(np.zeros(n), n, 3))


def test_sequence_model_matches_diagonal_design():
    n = 100
    rng = np.random.default_rng(0)
    theta = rng.normal(0, 0.3, n)
    X = generate_design(DesignSpec("diagonal", n, n))
    reps = 10_000
    a = np.array([X.T @ generate_response(X, theta, 1.0, s) / n for s in range(reps)])
    b = np.array([generate_sequence_model(theta, n, s + reps) for s in range(reps)])
    se = math.sqrt(2 / (n * reps))
    assert np.max(np.abs(a.mean(0) - b.mean(0))) < 5 * se * 3
    assert abs(a.var(0).mean() * n - 1) < 0.03 and abs(b.var(0).mean() * n - 1) < 0.03


def test_diagonal_isometry():
    n = 30
    X = generate_design(DesignSpec("diagonal", n, n))
    rng = np.random.default_rng(1)
    for _ in range(20):
        t, u = rng.standard_normal(n), rng.standard_normal(n)
        d = X @ (t - u)
        assert math.sqrt(d @ d / n) == pytest.approx(np.linalg.norm(t - u), rel=1e-12)


def test_reproducible_and_derived_seeds():
    spec = DesignSpec("gaussian", 20, 10, seed=9)
    assert np.array_equal(generate_design(spec), generate_design(spec))
    assert derive_seed(1, 0, 5) == derive_seed(1, 0, 5)
    assert len({derive_seed(1, 0, r) for r in range(100)}) == 100
    assert derive_seed(1, 0, 5) != derive_seed(2, 0, 5)
