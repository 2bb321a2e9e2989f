"""Prior mass over subset masks: Bernoulli and the three DPP families.

Every DPP-type family is handled through its effective kernel ``K`` so the
normalizer is always ``log det(K + I)``:

========  ===============================
DPP       ``w R``
LDPP      ``w (θ R + (1 - θ) I)``
GDPP      ``w R**α``
========  ===============================
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import linalg
from .errors import DimensionMismatch, TooLarge

MAX_TABLE_P = 20


class Family(str, Enum):
    BERNOULLI = "bernoulli"
    DPP = "dpp"
    LDPP = "ldpp"
    GDPP = "gdpp"


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """A prior family with its hyperparameters.

    Instances are immutable. For GDPP the matrix power ``R**alpha`` is
    computed once at construction; use :func:`dataclasses.replace` (or
    :meth:`with_params`) to move to a different ``alpha``.
    """

    family: Family
    w: float
    kernel: np.ndarray = None
    theta: float = None
    alpha: float = None
    p: int = None
    _power: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        if not self.w > 0:
            raise ValueError(f"w must be positive, got {self.w}")
        if family is Family.BERNOULLI:
            if not self.w < 1:
                raise ValueError(f"Bernoulli w must lie in (0, 1), got {self.w}")
            if self.p is None:
                if self.kernel is None:
                    raise ValueError("Bernoulli prior needs p")
                object.__setattr__(self, "p", int(np.shape(self.kernel)[0]))
            return
        if self.kernel is None:
            raise ValueError(f"{family.value} prior needs a kernel")
        R = np.asarray(self.kernel, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise DimensionMismatch(f"kernel must be square, got {R.shape}")
        object.__setattr__(self, "kernel", R)
        object.__setattr__(self, "p", R.shape[0])
        if family is Family.LDPP:
            if self.theta is None or not 0.0 <= self.theta <= 1.0:
                raise ValueError(f"LDPP theta must lie in [0, 1], got {self.theta}")
        if family is Family.GDPP:
            if self.alpha is None or self.alpha < 0:
                raise ValueError(f"GDPP alpha must be non-negative, got {self.alpha}")
            object.__setattr__(self, "_power", linalg.fractional_power(R, self.alpha))

    @classmethod
    def bernoulli(cls, w, p):
        return cls(Family.BERNOULLI, w, p=p)

    @classmethod
    def dpp(cls, R, w):
        return cls(Family.DPP, w, kernel=R)

    @classmethod
    def ldpp(cls, R, w, theta):
        return cls(Family.LDPP, w, kernel=R, theta=theta)

    @classmethod
    def gdpp(cls, R, w, alpha):
        return cls(Family.GDPP, w, kernel=R, alpha=alpha)

    def with_params(self, **changes):
        kwargs = dict(family=self.family, w=self.w, kernel=self.kernel,
                      theta=self.theta, alpha=self.alpha, p=self.p)
        kwargs.update(changes)
        return PriorSpec(**kwargs)

    def base_kernel(self):
        """The kernel before the ``w`` scaling (identity for Bernoulli)."""
        if self.family is Family.BERNOULLI:
            return np.eye(self.p)
        if self.family is Family.DPP:
            return self.kernel
        if self.family is Family.LDPP:
            return self.theta * self.kernel + (1.0 - self.theta) * np.eye(self.p)
        return self._power

    def effective_kernel(self):
        if self.family is Family.BERNOULLI:
            return np.eye(self.p) * (self.w / (1.0 - self.w))
        return self.w * self.base_kernel()


def log_prior_masses(spec, masks):
    """Unnormalized log prior for each row of ``masks``."""
    masks = np.atleast_2d(np.asarray(masks, dtype=bool))
    if masks.shape[1] != spec.p:
        raise DimensionMismatch(f"mask length {masks.shape[1]} does not match p={spec.p}")
    card = masks.sum(axis=1)
    if spec.family is Family.BERNOULLI:
        return card * np.log(spec.w) + (spec.p - card) * np.log1p(-spec.w)
    return card * np.log(spec.w) + linalg.principal_logdets(spec.base_kernel(), masks)


def log_prior_unnormalized(spec, mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (spec.p,):
        raise DimensionMismatch(f"mask length {mask.size} does not match p={spec.p}")
    return float(log_prior_masses(spec, mask[None, :])[0])


def log_normalizer(spec):
    """log of the total unnormalized mass; 0 for Bernoulli."""
    if spec.family is Family.BERNOULLI:
        return 0.0
    return linalg.log_det_plus_identity(spec.effective_kernel())


@dataclass(frozen=True, eq=False)
class MaskTable:
    """Values indexed by subset mask, e.g. a prior or posterior table."""

    masks: np.ndarray
    values: np.ndarray

    def _codes(self):
        return self.masks.astype(np.int64) @ (np.int64(1) << np.arange(self.masks.shape[1], dtype=np.int64))

    def __getitem__(self, indices):
        if isinstance(indices, np.ndarray) and indices.dtype == bool:
            indices = np.flatnonzero(indices)
        code = sum(1 << int(i) for i in indices)
        hits = np.flatnonzero(self._codes() == code)
        if hits.size == 0:
            raise KeyError(tuple(indices))
        return float(self.values[hits[0]])

    def __len__(self):
        return self.values.size

    def items(self):
        for mask, value in zip(self.masks, self.values):
            yield linalg.mask_key(mask), float(value)


def prior_table(spec):
    """Exact normalized prior probabilities over all ``2**p`` masks."""
    if spec.p > MAX_TABLE_P:
        raise TooLarge(f"p={spec.p} exceeds the table limit of {MAX_TABLE_P}")
    masks = linalg.enumerate_masks(spec.p)
    logp = log_prior_masses(spec, masks) - log_normalizer(spec)
    return MaskTable(masks, np.exp(logp))


def pair_suppression_check(spec, i, j):
    """Residual of P({i,j}) = Z·[P({i})P({j}) - (K_ij / Z)²], Z = det(K + I).

    Zero up to rounding for any DPP-type kernel; used as a diagnostic.
    """
    if spec.family is Family.BERNOULLI:
        raise ValueError("pair suppression is defined for DPP-type priors")
    if i == j:
        raise ValueError("i and j must differ")
    p = spec.p
    K = spec.effective_kernel()
    log_z = log_normalizer(spec)
    z = np.exp(log_z)

    def prob(indices):
        return np.exp(log_prior_unnormalized(spec, linalg.mask_from_indices(indices, p)) - log_z)

    return float(prob([i, j]) - z * (prob([i]) * prob([j]) - (K[i, j] / z) ** 2))
