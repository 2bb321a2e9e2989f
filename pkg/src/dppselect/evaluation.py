"""Simulation and resampling studies comparing the estimators.

All randomness comes from Philox streams keyed by ``(seed, purpose, ...)``
so any repetition or round can be regenerated on its own, in any order,
on any platform.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines, linalg, preselect, selection
from .data import Dataset
from .errors import ConfigError, DimensionMismatch, DPPSelectError
from .wilcoxon import wilcoxon_signed_rank

log = logging.getLogger(__name__)

BAYES_METHODS = {"EB": "bernoulli", "DPP": "dpp", "LDPP": "ldpp", "GDPP": "gdpp"}
METHODS = ("EB", "DPP", "LDPP", "GDPP", "RIDGE", "OLS", "ORACLE")

_DESIGN, _RESPONSE, _ROUND = 0, 1, 2


def substream(seed, *key):
    """Independent generator for ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return a, b


def max_loss(beta_star, beta_hat):
    a, b = _pair(beta_star, beta_hat)
    return float(np.max(np.abs(a - b)))


def quad_loss(beta_star, beta_hat):
    a, b = _pair(beta_star, beta_hat)
    return float(np.sum((a - b) ** 2))


def abs_loss(y, y_hat):
    a, b = _pair(y, y_hat)
    return np.abs(a - b)


# ---------------------------------------------------------------------------
# estimators behind one interface
# ---------------------------------------------------------------------------

def fit_method(name, X, y, *, sigma2=None, intercept=False, true_support=None,
               preselect_k=None, alpha_max=3.0, fixed=None):
    """Fit one named method and return ``(beta, intercept)`` on the raw scale."""
    if name in BAYES_METHODS:
        support = None
        if preselect_k is not None and X.shape[1] > preselect_k:
            support = preselect.select_support(X, y, preselect_k)
        opts = selection.FitOptions(intercept=intercept, sigma2=sigma2, support=support,
                                    alpha_max=alpha_max, fixed=dict(fixed or {}))
        res = selection.fit_and_select(Dataset(X, y), BAYES_METHODS[name], opts)
        return res.beta, res.intercept
    if name == "RIDGE":
        fit = baselines.fit_ridge(X, y, sigma2=sigma2, intercept=intercept)
        return fit.beta, fit.intercept
    if name == "OLS":
        return baselines.ols(X, y, intercept=intercept)
    if name == "ORACLE":
        if true_support is None:
            raise ConfigError("ORACLE needs the true support")
        return baselines.oracle(X, y, true_support, intercept=intercept)
    raise ConfigError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")


def check_methods(methods, oracle_allowed):
    methods = list(methods)
    if not methods:
        raise ConfigError("method list is empty")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    if "ORACLE" in methods and not oracle_allowed:
        raise ConfigError("ORACLE needs a known true coefficient vector (synthetic data only)")
    if len(set(methods)) != len(methods):
        raise ConfigError("duplicate method names")
    return methods


# ---------------------------------------------------------------------------
# synthetic risk study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    rows: int = 400
    beta_star: tuple = (1.0, -1.0, 0.0, 0.0, 0.0, 0.0)
    noise_sd: float = 0.9
    collinear_noise_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.rows < 6:
            raise ConfigError("synthetic design needs at least 6 rows")
        if not self.noise_sd > 0:
            raise ConfigError("noise_sd must be positive")
        if len(self.beta_star) != 6:
            raise ConfigError("beta_star must have 6 entries")

    @property
    def true_support(self):
        return np.asarray(self.beta_star) != 0


def generate_synthetic(spec):
    """Three independent normal columns and three noisy pairwise sums of them."""
    rng = substream(spec.seed, _DESIGN)
    Z = rng.standard_normal((spec.rows, 6))
    x1, x2, x3 = Z[:, 0], Z[:, 1], Z[:, 2]
    s = spec.collinear_noise_scale
    return np.column_stack([x1, x2, x3,
                            x1 + x2 + s * Z[:, 3],
                            x1 + x3 + s * Z[:, 4],
                            x2 + x3 + s * Z[:, 5]])


def synthetic_response(spec, X, k, rep):
    """Response for the first ``20k`` rows, repetition ``rep``."""
    rows = 20 * k
    eps = substream(spec.seed, _RESPONSE, k, rep).standard_normal(rows)
    return X[:rows] @ np.asarray(spec.beta_star, dtype=float) + spec.noise_sd * eps


@dataclass
class RiskCurve:
    sample_sizes: list
    methods: list
    mean: dict
    stderr: dict
    reps: int
    failures: dict = field(default_factory=dict)

    def rows(self):
        for m in self.methods:
            for i, n in enumerate(self.sample_sizes):
                yield m, n, float(self.mean[m][i]), float(self.stderr[m][i]), self.reps


def _risk_block(spec, methods, k, reps):
    X = generate_synthetic(spec)[:20 * k]
    support = spec.true_support
    beta_star = np.asarray(spec.beta_star, dtype=float)
    losses = np.empty((len(methods), len(reps)))
    failed = np.zeros(len(methods), dtype=int)
    for c, rep in enumerate(reps):
        y = synthetic_response(spec, X, k, rep)
        for r, m in enumerate(methods):
            try:
                beta, _ = fit_method(m, X, y, sigma2=spec.noise_sd ** 2, true_support=support)
                losses[r, c] = max_loss(beta_star, beta)
            except (DPPSelectError, np.linalg.LinAlgError) as exc:
                log.debug("%s failed at k=%d rep=%d: %s", m, k, rep, exc)
                losses[r, c] = np.inf
                failed[r] += 1
    return losses, failed


def run_risk_study(spec, methods, k_max=20, reps=10000, k_values=None, workers=1):
    """Mean maximum loss and its standard error per method and sample size ``20k``.

    One design is drawn per study; only the responses are resampled. A fit
    that raises scores +inf and is counted in ``failures``.
    """
    methods = check_methods(methods, oracle_allowed=True)
    if reps < 2:
        raise ConfigError("reps must be at least 2")
    ks = list(k_values) if k_values is not None else list(range(1, k_max + 1))
    if any(20 * k > spec.rows for k in ks):
        raise ConfigError(f"20k exceeds the {spec.rows} design rows")
    blocks = [(k, list(range(reps))) for k in ks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_risk_block, *zip(*[(spec, methods, k, r) for k, r in blocks])))
    else:
        results = [_risk_block(spec, methods, k, r) for k, r in blocks]
    mean, stderr, failures = {}, {}, {}
    for i, m in enumerate(methods):
        L = np.array([res[0][i] for res in results])
        mean[m] = L.mean(axis=1)
        with np.errstate(invalid="ignore"):
            stderr[m] = L.std(axis=1, ddof=1) / np.sqrt(reps)
        failures[m] = np.array([res[1][i] for res in results])
    return RiskCurve([20 * k for k in ks], methods, mean, stderr, reps, failures)


# ---------------------------------------------------------------------------
# Mahalanobis split and predictive study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    test_pool_size: int = 10
    exclude_furthest: int = 20
    train_size: int = 20
    rounds: int = 60
    seed: int = 0

    def __post_init__(self):
        if self.exclude_furthest < self.test_pool_size:
            raise ConfigError("exclude_furthest must be at least test_pool_size")
        if self.test_pool_size < 1 or self.train_size < 1 or self.rounds < 1:
            raise ConfigError("pool sizes and rounds must be positive")


AIR_POLLUTION_SPLIT = SplitSpec(test_pool_size=10, exclude_furthest=20, train_size=20, rounds=60)
BODY_FAT_SPLIT = SplitSpec(test_pool_size=10, exclude_furthest=50, train_size=30, rounds=100)


def mahalanobis_split(dataset, spec):
    """Row indices ``(test_pool, train_pool)``.

    The test pool is the ``test_pool_size`` rows furthest from the design
    mean; the training pool drops the ``exclude_furthest`` furthest rows.
    Rows in between belong to neither.
    """
    n = dataset.n
    if spec.exclude_furthest + spec.train_size > n:
        raise ConfigError(f"n={n} too small for exclude_furthest + train_size")
    d = linalg.mahalanobis_distances(dataset.X)
    order = np.argsort(-d, kind="stable")
    return np.sort(order[:spec.test_pool_size]), np.sort(order[spec.exclude_furthest:])


@dataclass
class PredictiveResult:
    methods: list
    losses: dict
    test_rows: np.ndarray
    failures: list = field(default_factory=list)


def run_predictive_study(dataset, spec, methods, preselect_k=10, alpha_max=3.0, fixed=None):
    """Absolute prediction error per round for each method.

    Each round draws one test row from the far pool and ``train_size``
    training rows (without replacement) from the near pool. Intercept and
    noise variance are estimated; the Bayesian methods enumerate over the
    first ``preselect_k`` LARS entrants of the round's training data.
    A failed fit leaves NaN for that round and is listed in ``failures``.
    """
    methods = check_methods(methods, oracle_allowed=False)
    test_pool, train_pool = mahalanobis_split(dataset, spec)
    losses = {m: np.full(spec.rounds, np.nan) for m in methods}
    test_rows = np.empty(spec.rounds, dtype=int)
    failures = []
    for r in range(spec.rounds):
        rng = substream(spec.seed, _ROUND, r)
        t = int(rng.choice(test_pool))
        train = np.sort(rng.choice(train_pool, size=spec.train_size, replace=False))
        test_rows[r] = t
        X, y = dataset.X[train], dataset.y[train]
        for m in methods:
            try:
                beta, b0 = fit_method(m, X, y, sigma2=None, intercept=True,
                                      preselect_k=preselect_k, alpha_max=alpha_max, fixed=fixed)
            except (DPPSelectError, np.linalg.LinAlgError) as exc:
                failures.append({"round": r, "method": m, "error": type(exc).__name__, "message": str(exc)})
                continue
            losses[m][r] = abs(dataset.y[t] - (b0 + dataset.X[t] @ beta))
    return PredictiveResult(methods, losses, test_rows, failures)


def pairwise_wilcoxon(losses, methods=None):
    """One-sided tests that method ``a`` has smaller losses than ``b``, for every ordered pair."""
    methods = list(methods or losses)
    out = []
    for a in methods:
        for b in methods:
            if a == b:
                continue
            la, lb = np.asarray(losses[a]), np.asarray(losses[b])
            keep = np.isfinite(la) & np.isfinite(lb)
            row = {"a": a, "b": b, "alternative": "less", "pairs": int(keep.sum())}
            try:
                res = wilcoxon_signed_rank(la[keep], lb[keep], alternative="less")
                row.update(statistic=res.statistic, pvalue=res.pvalue, n_eff=res.n_eff, method=res.method)
            except (DPPSelectError, ValueError) as exc:
                row.update(statistic=None, pvalue=None, n_eff=0, method=None, note=str(exc))
            out.append(row)
    return out


def make_collinear_dataset(n=60, seed=0, noise_sd=0.5):
    """A seeded collinear regression problem with an intercept, for demos and tests.

    Four latent factors drive eight predictors; the response depends on
    three of the factors' direct measurements.
    """
    rng = substream(seed, 3)
    F = rng.standard_normal((n, 4))
    E = rng.standard_normal((n, 8))
    X = np.column_stack([
        F[:, 0], F[:, 1], F[:, 2], F[:, 3],
        F[:, 0] + F[:, 1] + 0.1 * E[:, 4],
        F[:, 1] - F[:, 2] + 0.1 * E[:, 5],
        F[:, 0] + F[:, 3] + 0.1 * E[:, 6],
        F[:, 2] + F[:, 3] + 0.1 * E[:, 7],
    ])
    beta = np.array([1.0, -1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0])
    y = 3.0 + X @ beta + noise_sd * rng.standard_normal(n)
    return Dataset(X, y, tuple(f"x{j + 1}" for j in range(8)))
