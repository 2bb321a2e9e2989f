import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import multivariate_normal

from dppselect.baselines import _Evidence, fit_ridge, ols, oracle, ridge_evidence
from dppselect.errors import RankDeficient


def test_ols_orthonormal(rng):
    Q = np.linalg.qr(rng.standard_normal((10, 3)))[0]
    y = rng.standard_normal(10)
    beta, b0 = ols(Q, y)
    np.testing.assert_allclose(beta, Q.T @ y, atol=1e-12)
    assert b0 == 0.0


def test_ols_noiseless_and_normal_equations(rng):
    X = rng.standard_normal((15, 4))
    beta_star = np.array([1.0, -2.0, 0.5, 3.0])
    np.testing.assert_allclose(ols(X, X @ beta_star)[0], beta_star, atol=1e-10)
    y = rng.standard_normal(15)
    beta, _ = ols(X, y)
    np.testing.assert_allclose(X.T @ (y - X @ beta), 0, atol=1e-8)


def test_ols_with_intercept_matches_lstsq(rng):
    X = rng.normal(4.0, 2.0, (20, 3))
    y = rng.standard_normal(20)
    beta, b0 = ols(X, y, intercept=True)
    want = np.linalg.lstsq(np.column_stack([np.ones(20), X]), y, rcond=None)[0]
    np.testing.assert_allclose(np.r_[b0, beta], want, atol=1e-10)


def test_ols_rank_deficient(rng):
    X = rng.standard_normal((10, 2))
    with pytest.raises(RankDeficient):
        ols(np.column_stack([X, X[:, 0]]), rng.standard_normal(10))


def test_oracle(rng):
    X = rng.standard_normal((12, 4))
    y = rng.standard_normal(12)
    np.testing.assert_allclose(oracle(X, y, np.ones(4, bool))[0], ols(X, y)[0], atol=1e-14)
    assert not oracle(X, y, np.zeros(4, bool))[0].any()
    beta, _ = oracle(X, y, np.array([True, True, False, False]))
    A = X[:, :2]
    np.testing.assert_allclose(beta[:2], np.linalg.solve(A.T @ A, A.T @ y), atol=1e-12)
    assert not beta[2:].any()


def test_ridge_evidence_matches_gaussian_density(rng):
    X = rng.standard_normal((6, 3))
    y = rng.standard_normal(6)
    lam, s2 = 0.7, 1.4
    cov = s2 * (np.eye(6) + X @ X.T / lam)
    assert ridge_evidence(X, y, lam, s2) == pytest.approx(multivariate_normal.logpdf(y, cov=cov), abs=1e-10)


def test_ridge_evidence_limits(rng):
    X = rng.standard_normal((5, 2))
    y = rng.standard_normal(5)
    null = multivariate_normal.logpdf(y, cov=0.8 * np.eye(5))
    assert ridge_evidence(X, y, 1e10, 0.8) == pytest.approx(null, abs=1e-6)
    Z = np.zeros((5, 2))
    assert ridge_evidence(Z, y, 0.01, 0.8) == pytest.approx(ridge_evidence(Z, y, 100.0, 0.8), abs=1e-12)


@given(st.floats(-8, 8), st.integers(0, 2 ** 31))
def test_eigen_route_matches_direct(log_lam, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((9, 4))
    y = rng.standard_normal(9)
    got, _ = _Evidence(X, y, 0.9).at(log_lam)
    assert got == pytest.approx(ridge_evidence(X, y, np.exp(log_lam), 0.9), abs=1e-8)


def test_profiled_sigma_is_the_maximizer(rng):
    X = rng.standard_normal((14, 3))
    y = rng.standard_normal(14)
    ev = _Evidence(X, y, None)
    value, s2 = ev.at(0.3)
    for scale in (0.9, 1.1):
        assert ridge_evidence(X, y, np.exp(0.3), s2 * scale) < value
    assert value == pytest.approx(ridge_evidence(X, y, np.exp(0.3), s2), abs=1e-10)


def test_fit_ridge_beats_audit_grid(rng):
    X = rng.standard_normal((25, 5))
    y = X @ [1.0, 0.5, 0, 0, 0] + rng.standard_normal(25)
    fit = fit_ridge(X, y, sigma2=1.0)
    grid = np.exp(np.linspace(-12, 12, 25))
    assert all(fit.log_evidence >= ridge_evidence(X, y, lam, 1.0) - 1e-12 for lam in grid)
    assert fit.log_evidence == pytest.approx(ridge_evidence(X, y, fit.lam, 1.0), abs=1e-9)


def test_fit_ridge_shrinks_pure_noise():
    rng = np.random.default_rng(31)
    X = rng.standard_normal((40, 4))
    y = rng.standard_normal(40)
    y -= 0.9 * X @ np.linalg.lstsq(X, y, rcond=None)[0]
    fit = fit_ridge(X, y, sigma2=1.0)
    assert fit.lam > 1e2
    assert np.linalg.norm(fit.beta) < np.linalg.norm(ols(X, y)[0])


def test_fit_ridge_strong_signal_near_ols():
    rng = np.random.default_rng(32)
    X = rng.standard_normal((2000, 3))
    y = X @ [3.0, -2.0, 1.0] + 0.5 * rng.standard_normal(2000)
    fit = fit_ridge(X, y)
    np.testing.assert_allclose(fit.beta, ols(X, y)[0], atol=0.05)


def test_fit_ridge_vanishing_penalty(rng):
    X = rng.standard_normal((20, 3))
    y = rng.standard_normal(20)
    np.testing.assert_allclose(fit_ridge(X, y, sigma2=1.0, lam=1e-10).beta, ols(X, y)[0], atol=1e-6)


def test_fit_ridge_with_intercept(rng):
    X = rng.normal(10.0, 1.0, (30, 2))
    y = 5.0 + X @ [1.0, -1.0] + 0.1 * rng.standard_normal(30)
    fit = fit_ridge(X, y, intercept=True, lam=1e-10)
    beta, b0 = ols(X, y, intercept=True)
    assert fit.intercept == pytest.approx(b0, abs=1e-6)
    np.testing.assert_allclose(fit.beta, beta, atol=1e-6)


def test_ridge_path_norm_nonincreasing(rng):
    X = rng.standard_normal((15, 4))
    y = rng.standard_normal(15)
    norms = [np.linalg.norm(fit_ridge(X, y, sigma2=1.0, lam=lam).beta) for lam in np.geomspace(1e-6, 1e6, 50)]
    assert np.all(np.diff(norms) <= 1e-12)
