"""One-sided Wilcoxon signed-rank test for paired samples."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from .errors import AllZeroDifferences, DimensionMismatch

EXACT_MAX_N = 12


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W+, the rank sum of the positive differences
    pvalue: float
    n_eff: int
    method: str


def _null_counts(doubled_ranks):
    """Number of sign patterns giving each value of 2·W+ (exact, integer)."""
    counts = {0: 1}
    for r in doubled_ranks:
        nxt = dict(counts)
        for s, c in counts.items():
            nxt[s + r] = nxt.get(s + r, 0) + c
        counts = nxt
    return counts


def wilcoxon_signed_rank(a, b, alternative="less", method="auto"):
    """Test whether ``a`` tends to be smaller (``"less"``) or larger than ``b``.

    Zero differences are dropped and tied magnitudes get average ranks.
    ``method="auto"`` enumerates the exact null distribution when at most
    12 differences remain and otherwise uses the normal approximation with
    tie-corrected variance and a 0.5 continuity correction.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatch("paired samples must be 1-D and of equal length")
    if a.size < 5:
        raise ValueError("need at least 5 pairs")
    if alternative not in ("less", "greater"):
        raise ValueError("alternative must be 'less' or 'greater'")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise AllZeroDifferences("all paired differences are zero")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "normal"

    if method == "exact":
        doubled = [int(round(2 * r)) for r in ranks]
        counts = _null_counts(doubled)
        obs = int(round(2 * w_plus))
        if alternative == "less":
            hits = sum(c for s, c in counts.items() if s <= obs)
        else:
            hits = sum(c for s, c in counts.items() if s >= obs)
        return WilcoxonResult(w_plus, hits / 2 ** n, n, "exact")

    if method != "normal":
        raise ValueError("method must be 'auto', 'exact' or 'normal'")
    mean = n * (n + 1) / 4.0
    _, tie_sizes = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float((tie_sizes ** 3 - tie_sizes).sum()) / 48.0
    sd = math.sqrt(var)
    if alternative == "less":
        z = (w_plus - mean + 0.5) / sd
    else:
        z = -(w_plus - mean - 0.5) / sd
    return WilcoxonResult(w_plus, float(ndtr(z)), n, "normal")
