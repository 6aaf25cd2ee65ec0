from __future__ import annotations

import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expscreen.baselines import (
    BicConfig,
    LassoConfig,
    bic_criterion,
    bic_fit,
    bic_penalty,
    default_lambda_grid,
    default_lasso_lambda,
    lambda_max,
    lasso,
    lasso_cv,
    lasso_cv_fit,
    lasso_fit,
    lasso_gauss,
    lasso_objective,
    soft_threshold,
)
from expscreen.linalg import DesignProblem, SparsityPattern, restricted_least_squares
from conftest import random_problem


def kkt_ok(pr, theta, lam, tol):
    g = 2.0 / pr.n * pr.X.T @ (pr.Y - pr.X @ theta)
    nz = theta != 0
    return bool(np.all(np.abs(g[~nz]) <= lam + tol) and np.all(np.abs(g[nz] - lam * np.sign(theta[nz])) <= tol))


def orthogonal_problem(n, M, seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, M)))
    X = Q * math.sqrt(n)
    Y = X @ (rng.normal(0, 1, M) * (rng.random(M) < 0.5)) + rng.standard_normal(n)
    return DesignProblem(X, Y, 1.0)


def test_default_lambda():
    assert default_lasso_lambda(2.0, 100, 200) == pytest.approx(2.0 * math.sqrt(8 * math.log(200) / 100))


def test_full_shrinkage():
    pr = random_problem(30, 20, seed=1)
    lam = lambda_max(pr.X, pr.Y)
    assert np.all(lasso(pr, LassoConfig(lam=lam)) == 0)
    assert np.all(lasso(pr, LassoConfig(lam=2 * lam)) == 0)


@pytest.mark.parametrize("seed", range(5))
def test_orthogonal_closed_form(seed):
    pr = orthogonal_problem(40, 15, seed)
    lam = 0.3
    want = soft_threshold(pr.X.T @ pr.Y / pr.n, lam / 2)
    got = lasso(pr, LassoConfig(lam=lam, tol=1e-12))
    np.testing.assert_allclose(got, want, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(10, 60), M=st.integers(5, 80), frac=st.floats(0.02, 0.9))
def test_kkt_conditions(seed, n, M, frac):
    pr = random_problem(n, M, seed=seed)
    lam = frac * lambda_max(pr.X, pr.Y)
    res = lasso_fit(pr, LassoConfig(lam=lam, tol=1e-9))
    assert res.converged
    assert kkt_ok(pr, res.theta, lam, 1e-6)


def test_random_probes():
    pr = random_problem(50, 100, seed=2)
    lam = default_lasso_lambda(1.0, 50, 100)
    theta = lasso(pr, LassoConfig(lam=lam))
    best = lasso_objective(pr, theta, lam)
    rng = np.random.default_rng(3)
    for _ in range(1000):
        probe = theta + rng.standard_normal(100) * rng.choice([1e-3, 1e-2, 1e-1, 1.0])
        probe[rng.random(100) < 0.5] = 0.0
        assert best <= lasso_objective(pr, probe, lam) + 1e-12


def test_objective_descent():
    pr = random_problem(60, 150, seed=4)
    res = lasso_fit(pr, LassoConfig(lam=0.02 * lambda_max(pr.X, pr.Y)))
    h = res.objective
    assert np.all(np.diff(h) <= 1e-12 * h[0])


def test_nonconvergence_reported():
    pr = random_problem(60, 150, seed=5)
    with pytest.warns(UserWarning):
        res = lasso_fit(pr, LassoConfig(lam=1e-4, max_iters=1, tol=1e-14))
    assert not res.converged and res.kkt_residual > 0


def test_lasso_soi_probability():
    rng = np.random.default_rng(6)
    n, M, A, sigma = 80, 60, 3.0, 1.0
    X = rng.standard_normal((n, M))
    X /= np.sqrt(np.mean(X**2, axis=0))
    theta_star = np.zeros(M)
    theta_star[:4] = [1.5, -1.0, 0.8, 0.5]
    eta = X @ theta_star
    lam = A * sigma * math.sqrt(math.log(M) / n)
    probes = [np.zeros(M), theta_star] + [np.where(np.arange(M) == j, theta_star, 0) for j in range(4)]
    hits = 0
    reps = 200
    for _ in range(reps):
        pr = DesignProblem(X, eta + sigma * rng.standard_normal(n), sigma**2)
        d = X @ lasso(pr, LassoConfig(lam=lam)) - eta
        loss = d @ d / n
        bound = min(
            float((X @ t - eta) @ (X @ t - eta)) / n + 2 * A * sigma * np.abs(t).sum() * math.sqrt(math.log(M) / n)
            for t in probes
        )
        hits += loss <= bound
    assert hits / reps >= 1 - M ** (1 - A**2 / 8) - 0.05


def test_cv_single_lambda_matches_lasso():
    pr = random_problem(40, 30, seed=7)
    got = lasso_cv(pr, LassoConfig(lambda_grid=np.array([0.2]), cv_folds=5))
    np.testing.assert_allclose(got, lasso(pr, LassoConfig(lam=0.2)), atol=1e-12)


def test_cv_noiseless_beats_default():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((60, 40))
    theta = np.zeros(40)
    theta[:3] = 1.0
    pr = DesignProblem(X, X @ theta, 1.0)
    grid = np.append(default_lambda_grid(X, pr.Y), 1e-6)
    cv = lasso_cv(pr, LassoConfig(lambda_grid=grid, cv_folds=5))
    default = lasso(pr)
    err = lambda t: float((X @ (t - theta)) @ (X @ (t - theta))) / 60
    assert err(cv) <= err(default)


def test_cv_leave_one_out_and_determinism():
    pr = random_problem(20, 10, seed=9)
    grid = default_lambda_grid(pr.X, pr.Y, num=8)
    a = lasso_cv_fit(pr, LassoConfig(lambda_grid=grid, cv_folds=20))
    b = lasso_cv_fit(pr, LassoConfig(lambda_grid=grid, cv_folds=20))
    assert np.array_equal(a.theta, b.theta)
    with pytest.raises(ValueError):
        lasso_cv(pr, LassoConfig(cv_folds=1))


def test_lasso_gauss_cases():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((30, 8))
    theta = np.array([2.0, 0, -1.0, 0, 0, 0.5, 0, 0])
    pr = DesignProblem(X, X @ theta)
    np.testing.assert_allclose(lasso_gauss(pr, theta, 0.1), theta, atol=1e-10)
    assert np.all(lasso_gauss(pr, theta, 5.0) == 0)
    base = rng.standard_normal(8)
    full = restricted_least_squares(pr, SparsityPattern.full(8)).theta
    np.testing.assert_allclose(lasso_gauss(pr, base, 0.0), full, atol=1e-12)


def test_lasso_gauss_rss_below_hard_threshold():
    pr = random_problem(50, 30, seed=11)
    base = lasso(pr)
    t = 0.05
    refit = lasso_gauss(pr, base, t)
    hard = np.where(np.abs(base) > t, base, 0)
    rss = lambda th: float((pr.Y - pr.X @ th) @ (pr.Y - pr.X @ th))
    assert rss(refit) <= rss(hard) + 1e-9


def test_bic_penalty_oracle():
    pr = random_problem(30, 10, seed=12, sigma2=0.8)
    a = 0.7
    rng = np.random.default_rng(13)
    for _ in range(30):
        bits = rng.random(10) < 0.4
        k = int(bits.sum())
        L = 2 * math.log(math.e * 10 / max(k, 1))
        pen = 2 * 0.8 / 30 * (1 + (2 + a) / (1 + a) * math.sqrt(L) + (1 + a) / a * L) * k
        fit = restricted_least_squares(pr, SparsityPattern(bits))
        assert abs(bic_criterion(pr, bits, a) - (fit.rss / 30 + pen)) <= 1e-12 * max(1, fit.rss / 30 + pen)


def test_bic_is_exhaustive_minimum():
    pr = random_problem(25, 8, seed=14)
    res = bic_fit(pr)
    for k in range(9):
        for idx in combinations(range(8), k):
            assert res.criterion <= bic_criterion(pr, SparsityPattern.from_support(8, idx), 1.0) + 1e-12


def test_bic_regimes():
    rng = np.random.default_rng(15)
    X = rng.standard_normal((40, 8))
    theta = np.array([1.0, 0, 0, -2.0, 0, 0, 0, 0])
    pr = DesignProblem(X, X @ theta, 1e6)
    assert np.all(bic_fit(pr).theta == 0)
    res = bic_fit(pr.with_sigma2(1e-8))
    assert res.support == (0, 3)
    with pytest.raises(ValueError):
        bic_fit(pr, BicConfig(exhaustive_cap=100))
    with pytest.raises(ValueError):
        BicConfig(a=0)
    assert bic_penalty(0, 8, 40, 1.0, 1.0) == 0.0


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold([3.0, -1.0], 2.0), [1.0, 0.0])
    y = np.array([0.5, -2.0, 1.5])
    np.testing.assert_array_equal(soft_threshold(y, 0.0), y)
    assert np.all(soft_threshold(y, 2.0) == 0)
    with pytest.raises(ValueError):
        soft_threshold(y, -1.0)
