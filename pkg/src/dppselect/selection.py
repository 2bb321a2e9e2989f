"""g-prior model search with empirical-Bayes hyperparameters.

The type-II likelihood is a sum over submodels, so everything that does
not depend on the hyperparameters (projection sums of squares, principal
minors of the correlation kernel, their eigenvalues) is computed once per
dataset in :class:`ModelSpace` and reused by every objective evaluation.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from . import linalg
from .errors import OptimizationFailed, RankDeficient, TooLarge
from .priors import Family, MaskTable, PriorSpec, log_normalizer, log_prior_masses

MAX_SUM_P = 25
MAX_TABLE_P = 20

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Hyperparams:
    """Hyperparameters of the g-prior model.

    ``mu`` is None when the model has no intercept. ``sigma2_known``
    records whether ``sigma2`` was given or estimated.
    """

    g: float
    w: float
    theta: float = None
    alpha: float = None
    sigma2: float = 1.0
    sigma2_known: bool = True
    mu: float = None

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")
        if not self.w > 0:
            raise ValueError(f"w must be positive, got {self.w}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.theta is not None and not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if self.alpha is not None and self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")

    def as_dict(self):
        out = {"g": self.g, "w": self.w, "sigma2": self.sigma2,
               "sigma2_known": self.sigma2_known}
        for name in ("theta", "alpha", "mu"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        return out


@dataclass(eq=False)
class SelectionResult:
    best_mask: np.ndarray
    hyper: Hyperparams
    beta: np.ndarray
    intercept: float
    log_type2: float
    log_posterior: MaskTable = None
    diagnostics: dict = field(default_factory=dict)

    def predict(self, X):
        return self.intercept + np.asarray(X, dtype=float) @ self.beta


def make_prior(family, hyper, kernel):
    family = Family(family)
    if family is Family.BERNOULLI:
        return PriorSpec.bernoulli(hyper.w, kernel.shape[0])
    if family is Family.DPP:
        return PriorSpec.dpp(kernel, hyper.w)
    if family is Family.LDPP:
        return PriorSpec.ldpp(kernel, hyper.w, hyper.theta)
    return PriorSpec.gdpp(kernel, hyper.w, hyper.alpha)


# ---------------------------------------------------------------------------
# single-model marginal
# ---------------------------------------------------------------------------

def log_marginal_given_model(X_gamma, y, g, sigma2):
    """Closed-form log ∫ p(y | β_γ) p(β_γ | g) dβ_γ under the g-prior.

    Returns -inf when ``X_gamma`` is rank deficient.
    """
    y = np.asarray(y, dtype=float)
    X_gamma = np.asarray(X_gamma, dtype=float).reshape(y.size, -1)
    k = X_gamma.shape[1]
    try:
        ss = linalg.projection_ss(X_gamma, y)
    except RankDeficient:
        return -math.inf
    return _log_marginal(k, ss, y.size, float(y @ y), g, sigma2)


def _log_marginal(k, ss, n, yty, g, sigma2):
    return (-0.5 * k * np.log1p(g) - 0.5 * n * (LOG_2PI + np.log(sigma2))
            + g / (1.0 + g) * ss / (2.0 * sigma2) - yty / (2.0 * sigma2))


# ---------------------------------------------------------------------------
# enumerated model space
# ---------------------------------------------------------------------------

class ModelSpace:
    """Hyperparameter-free quantities for every enumerated submodel.

    The working design is the raw design scaled to unit-norm centered
    columns; it is also centered when the model has an intercept, in which
    case the response is shifted by ``mu``.
    """

    def __init__(self, dataset, mu=None, support=None, max_p=MAX_SUM_P):
        X, y = dataset.X, dataset.y
        self.n, self.p = X.shape
        std = linalg.standardize(X)
        self.means, self.scales = std.means, std.scales
        self.mu = mu
        if mu is None:
            self.Z = X / self.scales
            self.y = y.copy()
        else:
            self.Z = std.values
            self.y = y - mu
        if support is None:
            if self.p > max_p:
                raise TooLarge(f"p={self.p} exceeds the enumeration limit of {max_p}; pass a support")
            self.support = np.ones(self.p, dtype=bool)
            self.masks = linalg.enumerate_masks(self.p)
        else:
            self.support = np.asarray(support, dtype=bool)
            if self.support.shape != (self.p,):
                raise ValueError("support must be a mask of length p")
            if self.support.sum() > max_p:
                raise TooLarge(f"support of size {self.support.sum()} exceeds {max_p}")
            self.masks = linalg.masks_within(self.support)
        self.R = linalg.correlation_kernel(std)
        self.card = self.masks.sum(axis=1)
        ss, ok = linalg.projection_ss_all(self.Z, self.y, self.masks)
        self.rank_ok = ok
        self.ss = np.where(ok, ss, 0.0)
        self.yty = float(self.y @ self.y)
        self.card_f = self.card.astype(float)
        self.ss_masked = np.where(ok, ss, -np.inf)
        self.kernel_eigs = np.clip(np.linalg.eigvalsh(self.R), 0.0, None)
        self._logdet_R = None
        self._sub_eigs = None
        self._power_logdets = {}

    # cached kernel quantities -------------------------------------------------

    @property
    def logdet_R(self):
        if self._logdet_R is None:
            self._logdet_R = linalg.principal_logdets(self.R, self.masks)
        return self._logdet_R

    @property
    def sub_eigs(self):
        """Eigenvalues of each R_γ, padded with ones to a common width."""
        if self._sub_eigs is None:
            width = max(int(self.card.max()), 1)
            E = np.ones((self.masks.shape[0], width))
            for rows, idx in linalg._cardinality_groups(self.masks):
                k = idx.shape[1]
                if k:
                    E[rows, :k] = np.linalg.eigvalsh(self.R[idx[:, :, None], idx[:, None, :]])
            self._sub_eigs = E
        return self._sub_eigs

    # prior and likelihood -----------------------------------------------------

    def log_prior_batch(self, family, w, theta=None, alpha=None):
        """Normalized log prior, shape (B, M), for B hyperparameter settings.

        ``alpha`` must be a scalar: GDPP minors are recomputed per value.
        """
        w = np.atleast_1d(np.asarray(w, dtype=float))[:, None]
        k = self.card[None, :]
        if family is Family.BERNOULLI:
            return k * np.log(w) + (self.p - k) * np.log1p(-w)
        lam = self.kernel_eigs[None, :]
        logw_k = k * np.log(w)
        if family is Family.DPP:
            return logw_k + self.logdet_R[None, :] - np.log1p(w * lam).sum(axis=1, keepdims=True)
        if family is Family.LDPP:
            theta = np.atleast_1d(np.asarray(theta, dtype=float))[:, None]
            vals = theta[:, :, None] * self.sub_eigs[None] + (1.0 - theta)[:, :, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                ld = np.where(vals > linalg.PIVOT_RTOL, np.log(np.abs(vals)), -np.inf).sum(axis=2)
            norm = np.log1p(w * (theta * lam + 1.0 - theta)).sum(axis=1, keepdims=True)
            return logw_k + ld - norm
        ld = self.power_terms(alpha)[0]
        norm = np.log1p(w * lam ** float(alpha)).sum(axis=1, keepdims=True)
        return logw_k + ld[None, :] - norm

    def log_marginal_batch(self, g, sigma2):
        g = np.atleast_1d(np.asarray(g, dtype=float))[:, None]
        sigma2 = np.atleast_1d(np.asarray(sigma2, dtype=float))[:, None]
        out = _log_marginal(self.card[None, :], self.ss[None, :], self.n, self.yty, g, sigma2)
        return np.where(self.rank_ok[None, :], out, -np.inf)

    def log_joint_batch(self, family, g, w, theta=None, alpha=None, sigma2=1.0):
        return self.log_prior_batch(family, w, theta, alpha) + self.log_marginal_batch(g, sigma2)

    def log_type2_batch(self, family, g, w, theta=None, alpha=None, sigma2=1.0):
        return logsumexp(self.log_joint_batch(family, g, w, theta, alpha, sigma2), axis=1)

    def power_terms(self, alpha):
        """Principal log-minors of R**alpha and their derivatives in alpha."""
        key = float(alpha)
        hit = self._power_logdets.get(key)
        if hit is None:
            if len(self._power_logdets) > 64:
                self._power_logdets.clear()
            vals, vecs = np.linalg.eigh(self.R)
            vals = np.clip(vals, 0.0, None)
            powered = vals ** key
            with np.errstate(divide="ignore", invalid="ignore"):
                dpowered = np.where(vals > 0, powered * np.log(vals), 0.0)
            A = (vecs * powered) @ vecs.T
            dA = (vecs * dpowered) @ vecs.T
            hit = linalg.principal_logdet_derivatives(0.5 * (A + A.T), 0.5 * (dA + dA.T), self.masks)
            self._power_logdets[key] = hit
        return hit

    def value_and_grad(self, family, g, w, theta=None, alpha=None, sigma2=1.0):
        """log p(y | ξ) at one point and its gradient.

        The gradient is with respect to (log g, log w or logit w for
        Bernoulli, theta, alpha, log sigma2), returned as a dict.
        """
        k = self.card_f
        grad = {}
        if family is Family.BERNOULLI:
            lp = k * (math.log(w) - math.log1p(-w)) + self.p * math.log1p(-w)
            dlp_w = k
            grad_w_const = -self.p * w
        else:
            if family is Family.DPP:
                base_eigs = self.kernel_eigs
                ld = self.logdet_R
            elif family is Family.LDPP:
                vals = theta * self.sub_eigs + (1.0 - theta)
                bad = vals <= linalg.PIVOT_RTOL
                safe = np.where(bad, 1.0, vals)
                ld = np.log(safe).sum(axis=1)
                dld_theta = ((self.sub_eigs - 1.0) / safe).sum(axis=1)
                if bad.any():
                    ld[bad.any(axis=1)] = -np.inf
                base_eigs = theta * self.kernel_eigs + (1.0 - theta)
            else:
                ld, dld_alpha = self.power_terms(alpha)
                base_eigs = self.kernel_eigs ** float(alpha)
            wl = w * base_eigs
            lp = k * math.log(w) + ld - np.log1p(wl).sum()
            dlp_w = k
            grad_w_const = -(wl / (1.0 + wl)).sum()

        shrink = g / (1.0 + g)
        c = shrink / (2.0 * sigma2)
        a = lp + k * (-0.5 * math.log1p(g)) + self.ss_masked * c
        m = a.max()
        if not math.isfinite(m):
            return -math.inf, None
        e = np.exp(a - m)
        total = e.sum()
        pi = e / total
        value = (m + math.log(total)
                 - 0.5 * self.n * (LOG_2PI + math.log(sigma2)) - self.yty / (2.0 * sigma2))

        fin = np.isfinite(a)
        ss = np.where(fin, self.ss_masked, 0.0)
        grad["g"] = float(pi @ (-0.5 * k * shrink + ss * shrink / (1.0 + g) / (2.0 * sigma2)))
        grad["w"] = float(pi @ dlp_w) + grad_w_const
        if family is Family.LDPP:
            dnorm = (w * (self.kernel_eigs - 1.0) / (1.0 + w * base_eigs)).sum()
            grad["theta"] = float(pi @ np.where(fin, dld_theta, 0.0)) - dnorm
        if family is Family.GDPP:
            with np.errstate(divide="ignore", invalid="ignore"):
                dbase = np.where(self.kernel_eigs > 0, base_eigs * np.log(self.kernel_eigs), 0.0)
            dnorm = (w * dbase / (1.0 + w * base_eigs)).sum()
            grad["alpha"] = float(pi @ np.where(fin, dld_alpha, 0.0)) - dnorm
        grad["sigma2"] = float(-(pi @ ss) * c) - 0.5 * self.n + self.yty / (2.0 * sigma2)
        return value, grad

    def log_joint(self, prior, hyper):
        """log p(γ) + log p(y | γ) for every mask, via the prior's own path."""
        lp = log_prior_masses(prior, self.masks) - log_normalizer(prior)
        return lp + self.log_marginal_batch(hyper.g, hyper.sigma2)[0]


def _space_for(dataset, hyper, support, max_p=MAX_SUM_P):
    return ModelSpace(dataset, mu=hyper.mu, support=support, max_p=max_p)


def log_type_ii_likelihood(dataset, prior, hyper, support=None):
    """log p(y | hyperparameters), summed over all masks (or those inside ``support``)."""
    space = _space_for(dataset, hyper, support)
    return float(logsumexp(space.log_joint(prior, hyper)))


def posterior_table(dataset, prior, hyper):
    space = _space_for(dataset, hyper, None, max_p=MAX_TABLE_P)
    lj = space.log_joint(prior, hyper)
    return MaskTable(space.masks, np.exp(lj - logsumexp(lj)))


# ---------------------------------------------------------------------------
# best model and coefficients
# ---------------------------------------------------------------------------

def _argmax_with_ties(scores, masks, rtol=1e-12):
    """Index of the best score; ties go to fewer predictors, then lower indices."""
    best = np.max(scores)
    if not np.isfinite(best):
        raise OptimizationFailed("every submodel has zero posterior mass")
    tied = np.flatnonzero(scores >= best - rtol * max(1.0, abs(best)))
    if tied.size == 1:
        return int(tied[0])
    return min(tied, key=lambda r: (int(masks[r].sum()), linalg.mask_key(masks[r])))


def estimate_coefficients(dataset, mask, g, mu=None):
    """Posterior-mean coefficients on the selected support, on the raw scale.

    Returns ``(beta, intercept)``; ``intercept`` is 0 without ``mu``.
    """
    mask = np.asarray(mask, dtype=bool)
    std = linalg.standardize(dataset.X)
    if mu is None:
        Z, y = dataset.X / std.scales, dataset.y
    else:
        Z, y = std.values, dataset.y - mu
    beta = np.zeros(dataset.p)
    if mask.any():
        beta[mask] = g / (1.0 + g) * linalg.solve_gram(Z[:, mask], y)
    beta = beta / std.scales
    intercept = 0.0 if mu is None else float(mu - std.means @ beta)
    return beta, intercept


def select_best_model(dataset, prior, hyper, support=None, with_table=False, space=None):
    if space is None:
        space = _space_for(dataset, hyper, support)
    lj = space.log_joint(prior, hyper)
    r = _argmax_with_ties(lj, space.masks)
    mask = space.masks[r].copy()
    beta, intercept = estimate_coefficients(dataset, mask, hyper.g, hyper.mu)
    table = None
    if with_table:
        table = MaskTable(space.masks, lj - logsumexp(lj))
    return SelectionResult(mask, hyper, beta, intercept, float(logsumexp(lj)), table,
                           {"n_models": int(space.masks.shape[0])})


# ---------------------------------------------------------------------------
# type-II maximum likelihood
# ---------------------------------------------------------------------------

@dataclass
class FitOptions:
    """Controls for :func:`fit_type_ii`.

    ``sigma2`` fixes the noise variance; None estimates it. ``fixed`` pins
    any of ``g, w, theta, alpha`` to a value on the natural scale. Box
    bounds are on the search scale: log g; logit w (Bernoulli) or log w;
    theta itself; alpha itself; log sigma2 relative to log(yᵀy/n).
    """

    intercept: bool = False
    sigma2: float = None
    fixed: dict = field(default_factory=dict)
    support: np.ndarray = None
    alpha_max: float = 3.0
    log_g_bounds: tuple = (-4.0, 12.0)
    w_bounds: tuple = (-10.0, 10.0)
    log_sigma2_bounds: tuple = (-12.0, 2.0)
    grid_points: int = 9
    n_starts: int = 5
    tol: float = 1e-12
    max_iter: int = 500


@dataclass
class TypeIIFit:
    hyper: Hyperparams
    log_likelihood: float
    diagnostics: dict


def _expit(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


class _Objective:
    """log p(y | ξ) on the search scale, for one family and dataset."""

    def __init__(self, space, family, options):
        self.space = space
        self.family = family
        self.options = options
        names = ["g", "w"]
        if family is Family.LDPP:
            names.append("theta")
        if family is Family.GDPP:
            names.append("alpha")
        if options.sigma2 is None:
            names.append("sigma2")
        self.fixed = {k: float(v) for k, v in options.fixed.items() if k in names}
        self.names = [s for s in names if s not in self.fixed]
        self.log_sigma2_ref = math.log(space.yty / space.n) if space.yty > 0 else 0.0
        bounds = {
            "g": options.log_g_bounds,
            "w": options.w_bounds,
            "theta": (0.0, 1.0),
            "alpha": (0.0, float(options.alpha_max)),
            "sigma2": options.log_sigma2_bounds,
        }
        self.bounds = [tuple(map(float, bounds[s])) for s in self.names]

    def natural(self, t):
        out = dict(self.fixed)
        if self.options.sigma2 is not None:
            out["sigma2"] = float(self.options.sigma2)
        for name, ti, (lo, hi) in zip(self.names, t, self.bounds):
            ti = min(max(float(ti), lo), hi)
            if name == "g":
                out[name] = math.exp(ti)
            elif name == "w":
                out[name] = float(_expit(ti)) if self.family is Family.BERNOULLI else math.exp(ti)
            elif name == "sigma2":
                out[name] = math.exp(ti + self.log_sigma2_ref)
            else:
                out[name] = ti
        return out

    def value_and_grad(self, t):
        nat = self.natural(t)
        return self.space.value_and_grad(self.family, nat["g"], nat["w"], nat.get("theta"),
                                         nat.get("alpha"), nat["sigma2"])

    def value(self, t):
        return self.value_and_grad(t)[0]

    def loss(self, t):
        """Negated objective and gradient, for a minimizer."""
        v, grad = self.value_and_grad(t)
        if not math.isfinite(v):
            return 1e300, np.zeros(len(self.names))
        return -v, -np.array([grad[s] for s in self.names])

    def values(self, T):
        return np.array([self.value(t) for t in T])

    def hyper(self, t, mu):
        nat = self.natural(t)
        return Hyperparams(
            g=nat["g"], w=nat["w"], theta=nat.get("theta"), alpha=nat.get("alpha"),
            sigma2=nat["sigma2"], sigma2_known=self.options.sigma2 is not None, mu=mu)


def _grid(bounds, points):
    axes = [np.linspace(lo, hi, points) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), [a.size for a in axes]


def _grid_starts(values, shape, n_starts):
    """Indices of the best grid local maxima, padded with the best other points."""
    V = np.where(np.isfinite(values), values, -np.inf).reshape(shape)
    is_peak = np.isfinite(V)
    for axis in range(V.ndim):
        for shift in (1, -1):
            nb = np.roll(V, shift, axis=axis)
            edge = [slice(None)] * V.ndim
            edge[axis] = 0 if shift == 1 else -1
            nb[tuple(edge)] = -np.inf
            is_peak &= V >= nb
    flat = V.ravel()
    order = np.argsort(-flat, kind="stable")
    peaks = [i for i in order if is_peak.ravel()[i]]
    rest = [i for i in order if not is_peak.ravel()[i] and np.isfinite(flat[i])]
    return (peaks + rest)[:n_starts]


def fit_type_ii(dataset, family, options=None):
    """Maximize the type-II likelihood over the family's free hyperparameters.

    The objective is first evaluated on a grid with ``options.grid_points``
    points per free coordinate; the best grid local maxima then seed
    ``options.n_starts`` bounded quasi-Newton searches using the exact
    gradient. The best end point is returned, so the result is never worse
    than the grid.
    """
    return _fit(dataset, family, options or FitOptions())[0]


def _fit(dataset, family, options):
    family = Family(family)
    mu = float(np.mean(dataset.y)) if options.intercept else None
    space = ModelSpace(dataset, mu=mu, support=options.support)
    objective = _Objective(space, family, options)

    if not objective.names:
        t = np.zeros(0)
        value = objective.value(t)
        if not math.isfinite(value):
            raise OptimizationFailed("type-II likelihood is not finite at the fixed hyperparameters")
        return TypeIIFit(objective.hyper(t, mu), value, {"starts": 0, "evaluations": 1}), space

    grid, shape = _grid(objective.bounds, options.grid_points)
    values = _grid_values(objective, space, grid)
    if not np.isfinite(values).any():
        raise OptimizationFailed("type-II likelihood is non-finite on the whole start grid")
    starts = _grid_starts(values, shape, options.n_starts)

    best = int(np.nanargmax(np.where(np.isfinite(values), values, -np.inf)))
    best_t, best_v = grid[best], float(values[best])
    evaluations = grid.shape[0]
    for i in starts:
        res = minimize(objective.loss, grid[i], jac=True, method="L-BFGS-B", bounds=objective.bounds,
                       options={"ftol": options.tol, "gtol": 1e-9, "maxiter": options.max_iter})
        evaluations += res.nfev
        t = np.clip(res.x, *np.array(objective.bounds).T)
        v = objective.value(t)
        if math.isfinite(v) and v > best_v:
            best_t, best_v = t, v
    diagnostics = {"starts": len(starts), "evaluations": int(evaluations),
                   "grid_best": float(values[best]), "free": list(objective.names)}
    return TypeIIFit(objective.hyper(best_t, mu), best_v, diagnostics), space


def _grid_values(objective, space, grid):
    """Objective on every grid point, vectorized over all but alpha."""
    B = grid.shape[0]
    nat = {name: np.full(B, np.nan) for name in ("g", "w", "theta", "alpha", "sigma2")}
    for r, t in enumerate(grid):
        for name, value in objective.natural(t).items():
            nat[name][r] = value
    family = objective.family
    if family is not Family.GDPP:
        out = np.empty(B)
        for s in range(0, B, 256):
            sl = slice(s, s + 256)
            out[sl] = space.log_type2_batch(family, nat["g"][sl], nat["w"][sl], nat["theta"][sl],
                                            None, nat["sigma2"][sl])
        return out
    out = np.empty(B)
    for a in np.unique(nat["alpha"]):
        rows = np.flatnonzero(nat["alpha"] == a)
        for s in range(0, rows.size, 256):
            r = rows[s:s + 256]
            out[r] = space.log_type2_batch(family, nat["g"][r], nat["w"][r], None, a, nat["sigma2"][r])
    return out


def fit_and_select(dataset, family, options=None, with_table=False):
    """Empirical-Bayes fit followed by the posterior-mode submodel."""
    options = options or FitOptions()
    fit, space = _fit(dataset, family, options)
    prior = make_prior(family, fit.hyper, space.R)
    result = select_best_model(dataset, prior, fit.hyper, with_table=with_table, space=space)
    result.log_type2 = fit.log_likelihood
    result.diagnostics.update(fit.diagnostics)
    return result
