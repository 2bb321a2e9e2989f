"""Small dense linear algebra used by the priors and the model search.

Everything that can vanish (determinants, marginal likelihoods) is carried
in the log domain. Subset masks are boolean arrays of length ``p``; the
full model space is enumerated in integer order, bit ``j`` of the row
index marking predictor ``j``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConstantColumn, DimensionMismatch, RankDeficient, SingularCovariance

# A Cholesky pivot no larger than PIVOT_RTOL times the original diagonal
# entry marks the matrix as numerically singular.
PIVOT_RTOL = 1e-12

_CHUNK = 1 << 15
_PADDED_LIMIT = 1 << 20


@dataclass(frozen=True)
class StandardizedDesign:
    values: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    @property
    def shape(self):
        return self.values.shape


def as_design(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise DimensionMismatch(f"design must be a non-empty n x p matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("design matrix has non-finite entries")
    return X


def standardize(X):
    """Center each column and scale it to unit Euclidean norm.

    The scale is the root of the summed squared deviations, with no
    ``1/n`` factor, so the standardized columns are orthonormal whenever
    the original centered columns are orthogonal.
    """
    X = as_design(X)
    means = X.mean(axis=0)
    centered = X - means
    scales = np.sqrt((centered ** 2).sum(axis=0))
    for j, s in enumerate(scales):
        if not s > 0 or np.ptp(X[:, j]) == 0:
            raise ConstantColumn(j)
    return StandardizedDesign(centered / scales, means, scales)


def correlation_kernel(Xs):
    """R = X̃ᵀX̃ for a standardized design; unit diagonal by construction."""
    Z = Xs.values if isinstance(Xs, StandardizedDesign) else np.asarray(Xs, dtype=float)
    R = Z.T @ Z
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    return np.clip(R, -1.0, 1.0)


# ---------------------------------------------------------------------------
# subset masks
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _all_masks(p):
    codes = np.arange(1 << p, dtype=np.int64)
    masks = ((codes[:, None] >> np.arange(p)) & 1).astype(bool)
    masks.setflags(write=False)
    return masks


def enumerate_masks(p):
    """All ``2**p`` masks as a read-only ``(2**p, p)`` boolean array."""
    return _all_masks(int(p))


def masks_within(support):
    """Masks whose active bits all lie inside ``support`` (full length p)."""
    support = np.asarray(support, dtype=bool)
    idx = np.flatnonzero(support)
    sub = enumerate_masks(len(idx))
    out = np.zeros((sub.shape[0], support.size), dtype=bool)
    out[:, idx] = sub
    return out


def mask_from_indices(indices, p):
    mask = np.zeros(p, dtype=bool)
    mask[list(indices)] = True
    return mask


def mask_key(mask):
    """Hashable key for a mask: the tuple of active indices."""
    return tuple(int(i) for i in np.flatnonzero(mask))


def _cardinality_groups(masks):
    """Yield ``(rows, idx)`` with ``idx[r]`` the active columns of ``masks[rows[r]]``."""
    card = masks.sum(axis=1)
    for k in np.unique(card):
        rows = np.flatnonzero(card == k)
        for start in range(0, rows.size, _CHUNK):
            r = rows[start:start + _CHUNK]
            idx = np.nonzero(masks[r])[1].reshape(r.size, k)
            yield r, idx


# ---------------------------------------------------------------------------
# batched factorization
# ---------------------------------------------------------------------------

def batched_cholesky(A, rtol=PIVOT_RTOL):
    """Cholesky factors of a stack of symmetric matrices.

    Returns ``(L, ok)``. ``ok[b]`` is False when some pivot of ``A[b]``
    falls to ``rtol`` times its diagonal entry or below; the factor for
    such entries is filled with placeholders and must not be used.
    """
    A = np.asarray(A, dtype=float)
    B, k, _ = A.shape
    diag = np.diagonal(A, axis1=1, axis2=2)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    else:
        piv = np.diagonal(L, axis1=1, axis2=2) ** 2
        return L, np.all(piv > rtol * diag, axis=1)
    L = np.zeros_like(A)
    ok = np.ones(B, dtype=bool)
    for j in range(k):
        row = L[:, j, :j]
        piv = A[:, j, j] - np.einsum("bi,bi->b", row, row)
        bad = ~(piv > rtol * diag[:, j])
        ok &= ~bad
        d = np.sqrt(np.where(bad, 1.0, piv))
        L[:, j, j] = d
        if j + 1 < k:
            L[:, j + 1:, j] = (A[:, j + 1:, j] - np.einsum("bik,bk->bi", L[:, j + 1:, :j], row)) / d[:, None]
    return L, ok


def _forward_solve(L, z):
    B, k = z.shape
    v = np.empty_like(z)
    for j in range(k):
        v[:, j] = (z[:, j] - np.einsum("bi,bi->b", L[:, j, :j], v[:, :j])) / L[:, j, j]
    return v


def principal_logdets(L, masks):
    """log det(L_γ) for every row of ``masks``; -inf where L_γ is singular."""
    L = np.asarray(L, dtype=float)
    masks = np.atleast_2d(np.asarray(masks, dtype=bool))
    if masks.shape[1] != L.shape[0]:
        raise DimensionMismatch(f"mask length {masks.shape[1]} does not match kernel size {L.shape[0]}")
    out = np.zeros(masks.shape[0])
    p = L.shape[0]
    if masks.shape[0] * p * p <= _PADDED_LIMIT:
        # identity outside the block leaves the pivots of L_γ unchanged
        block = masks[:, :, None] & masks[:, None, :]
        C, ok = batched_cholesky(np.where(block, L[None], np.eye(p)[None]))
        ld = 2.0 * np.log(np.diagonal(C, axis1=1, axis2=2)).sum(axis=1)
        return np.where(ok, ld, -np.inf)
    for rows, idx in _cardinality_groups(masks):
        if idx.shape[1] == 0:
            continue
        sub = L[idx[:, :, None], idx[:, None, :]]
        C, ok = batched_cholesky(sub)
        ld = 2.0 * np.log(np.diagonal(C, axis1=1, axis2=2)).sum(axis=1)
        out[rows] = np.where(ok, ld, -np.inf)
    return out


def principal_logdet_derivatives(A, dA, masks):
    """log det(A_γ) and its directional derivative tr(A_γ⁻¹ dA_γ) for each mask.

    Singular minors get ``-inf`` and a zero derivative.
    """
    A = np.asarray(A, dtype=float)
    dA = np.asarray(dA, dtype=float)
    masks = np.atleast_2d(np.asarray(masks, dtype=bool))
    ld = np.zeros(masks.shape[0])
    dld = np.zeros(masks.shape[0])
    for rows, idx in _cardinality_groups(masks):
        k = idx.shape[1]
        if k == 0:
            continue
        sub = A[idx[:, :, None], idx[:, None, :]]
        dsub = dA[idx[:, :, None], idx[:, None, :]]
        C, ok = batched_cholesky(sub)
        ld[rows] = np.where(ok, 2.0 * np.log(np.diagonal(C, axis1=1, axis2=2)).sum(axis=1), -np.inf)
        safe = np.where(ok[:, None, None], sub, np.eye(k)[None])
        dld[rows] = np.where(ok, np.trace(np.linalg.solve(safe, dsub), axis1=1, axis2=2), 0.0)
    return ld, dld


def log_det_principal_submatrix(L, mask):
    L = np.asarray(L, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (L.shape[0],):
        raise DimensionMismatch(f"mask length {mask.size} does not match kernel size {L.shape[0]}")
    return float(principal_logdets(L, mask[None, :])[0])


def log_det_plus_identity(L):
    """log det(L + I), the log of the DPP normalizing constant."""
    L = np.asarray(L, dtype=float)
    sign, ld = np.linalg.slogdet(L + np.eye(L.shape[0]))
    if sign <= 0:
        raise ValueError("L + I is not positive definite; L is not PSD")
    return float(ld)


def fractional_power(R, alpha):
    """R**alpha through the eigendecomposition, negative eigenvalues clamped to 0.

    ``0**0`` is taken as 1, so ``alpha=0`` returns the identity.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    R = np.asarray(R, dtype=float)
    vals, vecs = np.linalg.eigh(0.5 * (R + R.T))
    vals = np.clip(vals, 0.0, None) ** alpha
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

def projection_ss_all(X, y, masks):
    """Squared norm of the projection of ``y`` onto col(X_γ) for each mask.

    Returns ``(ss, ok)``; ``ok`` is False for rank-deficient submodels,
    whose ``ss`` entry is NaN.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    masks = np.atleast_2d(np.asarray(masks, dtype=bool))
    G = X.T @ X
    z = X.T @ y
    ss = np.zeros(masks.shape[0])
    good = np.ones(masks.shape[0], dtype=bool)
    for rows, idx in _cardinality_groups(masks):
        if idx.shape[1] == 0:
            continue
        C, ok = batched_cholesky(G[idx[:, :, None], idx[:, None, :]])
        v = _forward_solve(C, z[idx])
        ss[rows] = np.where(ok, (v ** 2).sum(axis=1), np.nan)
        good[rows] = ok
    return ss, good


def projection_ss(X_gamma, y):
    """yᵀX_γ(X_γᵀX_γ)⁻¹X_γᵀy; 0 for an empty submodel."""
    X_gamma = np.asarray(X_gamma, dtype=float)
    if X_gamma.ndim == 1:
        X_gamma = X_gamma[:, None]
    k = X_gamma.shape[1]
    if k == 0:
        return 0.0
    ss, ok = projection_ss_all(X_gamma, y, np.ones((1, k), dtype=bool))
    if not ok[0]:
        raise RankDeficient("submodel design is rank deficient")
    return float(min(ss[0], float(np.dot(y, y))))


def solve_gram(X, y):
    """Least-squares coefficients through a pivot-checked Cholesky of XᵀX."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] == 0:
        return np.zeros(0)
    G = X.T @ X
    C, ok = batched_cholesky(G[None])
    if not ok[0]:
        raise RankDeficient("XᵀX is numerically singular")
    C = C[0]
    v = np.linalg.solve(C, X.T @ np.asarray(y, dtype=float))
    return np.linalg.solve(C.T, v)


def mahalanobis_distances(X):
    """Distance of every row from the column means, under the n-1 sample covariance."""
    X = as_design(X)
    n, p = X.shape
    if n < p + 2:
        raise DimensionMismatch(f"need n >= p + 2 rows, got n={n}, p={p}")
    A = X - X.mean(axis=0)
    S = A.T @ A / (n - 1)
    C, ok = batched_cholesky(S[None])
    if not ok[0]:
        raise SingularCovariance("sample covariance of the design is singular")
    W = np.linalg.solve(C[0], A.T)
    return np.sqrt((W ** 2).sum(axis=0))
