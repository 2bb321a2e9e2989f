"""Reference estimators: OLS, empirical-Bayes ridge and the oracle."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import linalg

LOG_LAMBDA_BOUNDS = (-12.0, 12.0)
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class RidgeFit:
    lam: float
    beta: np.ndarray
    intercept: float
    log_evidence: float
    sigma2: float


def _working_design(X, y, intercept):
    """Design and response the estimator actually sees, plus the fold-back map."""
    X = linalg.as_design(X)
    y = np.asarray(y, dtype=float)
    if not intercept:
        return X, y, np.ones(X.shape[1]), np.zeros(X.shape[1]), 0.0
    std = linalg.standardize(X)
    ybar = float(y.mean())
    return std.values, y - ybar, std.scales, std.means, ybar


def ols(X, y, intercept=False):
    """Least squares. Returns ``(beta, intercept)``; the intercept is 0 unless requested.

    With ``intercept`` the design and response are centered first.
    """
    Z, yw, scales, means, ybar = _working_design(X, y, intercept)
    beta = linalg.solve_gram(Z, yw) / scales
    return beta, (ybar - float(means @ beta)) if intercept else 0.0


def oracle(X, y, support, intercept=False):
    """OLS restricted to the true support, zeros elsewhere."""
    X = linalg.as_design(X)
    support = np.asarray(support, dtype=bool)
    beta = np.zeros(X.shape[1])
    if not support.any():
        return beta, float(np.mean(y)) if intercept else 0.0
    sub, b0 = ols(X[:, support], y, intercept)
    beta[support] = sub
    return beta, b0


def ridge_evidence(X, y, lam, sigma2):
    """log p(y | λ, σ²) with β ~ N(0, σ²/λ · I), all constants included."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    A = X.T @ X + lam * np.eye(p)
    sign, logdet = np.linalg.slogdet(A)
    z = X.T @ y
    quad = float(y @ y - z @ np.linalg.solve(A, z))
    return (-0.5 * n * (LOG_2PI + math.log(sigma2)) + 0.5 * p * math.log(lam)
            - 0.5 * logdet - quad / (2.0 * sigma2))


class _Evidence:
    """Evidence as a function of log λ through one eigendecomposition of XᵀX."""

    def __init__(self, X, y, sigma2):
        self.n, self.p = X.shape
        d, V = np.linalg.eigh(X.T @ X)
        self.d = np.clip(d, 0.0, None)
        self.proj = (V.T @ (X.T @ y)) ** 2
        self.yty = float(y @ y)
        self.sigma2 = sigma2

    def at(self, log_lam):
        lam = math.exp(log_lam)
        quad = self.yty - float((self.proj / (self.d + lam)).sum())
        quad = max(quad, 0.0)
        sigma2 = self.sigma2 if self.sigma2 is not None else max(quad / self.n, 1e-300)
        value = (-0.5 * self.n * (LOG_2PI + math.log(sigma2)) + 0.5 * self.p * log_lam
                 - 0.5 * float(np.log(self.d + lam).sum()) - quad / (2.0 * sigma2))
        return value, sigma2


def fit_ridge(X, y, sigma2=None, intercept=False, lam=None, audit_points=25):
    """Ridge regression with λ chosen by maximizing the evidence.

    ``sigma2=None`` estimates the noise variance jointly; for fixed λ its
    maximizer is closed-form, so the search stays one-dimensional. The
    search is a 25-point grid over log λ followed by a bounded scalar
    refinement around the best grid point.
    """
    Z, yw, scales, means, ybar = _working_design(X, y, intercept)
    ev = _Evidence(Z, yw, sigma2)
    if lam is None:
        lo, hi = LOG_LAMBDA_BOUNDS
        grid = np.linspace(lo, hi, audit_points)
        vals = np.array([ev.at(t)[0] for t in grid])
        i = int(np.argmax(vals))
        step = grid[1] - grid[0]
        res = minimize_scalar(lambda t: -ev.at(t)[0], method="bounded",
                              bounds=(max(lo, grid[i] - step), min(hi, grid[i] + step)),
                              options={"xatol": 1e-9})
        log_lam = float(res.x) if -res.fun > vals[i] else float(grid[i])
    else:
        log_lam = math.log(lam)
    value, s2 = ev.at(log_lam)
    lam_hat = math.exp(log_lam)
    beta = np.linalg.solve(Z.T @ Z + lam_hat * np.eye(Z.shape[1]), Z.T @ yw) / scales
    b0 = (ybar - float(means @ beta)) if intercept else 0.0
    return RidgeFit(lam_hat, beta, b0, value, s2)

