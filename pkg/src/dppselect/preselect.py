"""Least angle regression, used to shortlist predictors before enumeration."""

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import DegenerateStep

# an inactive column whose residual after projecting on the active span
# keeps at most this fraction of its squared norm counts as a duplicate
_SPAN_RTOL = 1e-12


@dataclass(eq=False)
class LarsPath:
    """Entry order of the predictors and the coefficients at each breakpoint.

    ``breakpoints[t]`` is the coefficient vector at which ``entry_order[t]``
    joined; the last element is where the final step ended. ``skipped``
    lists predictors dropped because they lie in the span of the active set.
    """

    entry_order: list
    breakpoints: list
    skipped: list = field(default_factory=list)


def lars_path(Xs, y, max_steps=None, on_degenerate="skip"):
    """Plain LARS (no lasso modification) on a standardized design.

    ``y`` must be centered. At most ``max_steps`` predictors enter
    (default ``min(n - 1, p)``). Columns that become linearly dependent on
    the active set are skipped, lowest index first; with
    ``on_degenerate="raise"`` a :class:`DegenerateStep` is raised instead.
    """
    X = Xs.values if isinstance(Xs, linalg.StandardizedDesign) else np.asarray(Xs, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    limit = min(n - 1, p) if max_steps is None else min(int(max_steps), n - 1, p)
    col_norm2 = (X ** 2).sum(axis=0)

    beta = np.zeros(p)
    active, skipped = [], []
    breakpoints = []
    usable = np.ones(p, dtype=bool)

    c = X.T @ y
    if limit < 1 or not np.any(np.abs(c) > 0):
        return LarsPath([], [beta.copy()], skipped)
    join = int(np.argmax(np.abs(c)))

    while True:
        breakpoints.append(beta.copy())
        active.append(join)
        usable[join] = False
        _drop_dependent(X, active, usable, col_norm2, skipped, on_degenerate)

        c = X.T @ (y - X @ beta)
        signs = np.sign(c[active])
        signs[signs == 0] = 1.0
        XA = X[:, active] * signs
        G = XA.T @ XA
        ones = np.ones(len(active))
        Ginv1 = np.linalg.solve(G, ones)
        norm = 1.0 / np.sqrt(ones @ Ginv1)
        w = norm * Ginv1
        a = X.T @ (XA @ w)
        C = float(np.max(np.abs(c[active])))

        candidates = np.flatnonzero(usable)
        last = len(active) >= limit or candidates.size == 0
        step, nxt = C / norm, None
        if candidates.size:
            with np.errstate(divide="ignore", invalid="ignore"):
                g1 = (C - c[candidates]) / (norm - a[candidates])
                g2 = (C + c[candidates]) / (norm + a[candidates])
            tol = 1e-12 * max(C, 1e-300)
            g1 = np.where(g1 > tol, g1, np.inf)
            g2 = np.where(g2 > tol, g2, np.inf)
            gam = np.minimum(g1, g2)
            r = int(np.argmin(gam))
            if np.isfinite(gam[r]) and gam[r] < step:
                step, nxt = float(gam[r]), int(candidates[r])
        beta[active] += step * signs * w
        if nxt is None or last:
            breakpoints.append(beta.copy())
            return LarsPath(active, breakpoints, skipped)
        join = nxt


def _drop_dependent(X, active, usable, col_norm2, skipped, on_degenerate):
    cand = np.flatnonzero(usable)
    if cand.size == 0:
        return
    Q, _ = np.linalg.qr(X[:, active])
    resid = X[:, cand] - Q @ (Q.T @ X[:, cand])
    dependent = (resid ** 2).sum(axis=0) <= _SPAN_RTOL * col_norm2[cand]
    for j in cand[dependent]:
        if on_degenerate == "raise":
            raise DegenerateStep(f"predictor {j} lies in the span of the active set {active}")
        usable[j] = False
        skipped.append(int(j))


def select_support(X, y, k=10):
    """Mask of the first ``k`` LARS entrants; every predictor when ``p <= k``."""
    X = linalg.as_design(X)
    n, p = X.shape
    if p <= k:
        return np.ones(p, dtype=bool)
    y = np.asarray(y, dtype=float)
    path = lars_path(linalg.standardize(X), y - y.mean(), max_steps=k)
    return linalg.mask_from_indices(path.entry_order[:k], p)
