"""Rank statistics and divergences used by the evaluation metrics."""

from itertools import combinations

import numpy as np
from scipy.stats import rankdata


def importance_ranks(values):
    """Ranks of features by absolute importance, 1 = most important.

    Ties in ``|values|`` are broken by feature index (lower index ranks
    higher), so the result is always a permutation of ``1..d``.
    """
    v = np.abs(np.asarray(values, dtype=float))
    order = importance_order(v)
    ranks = np.empty(len(v), dtype=int)
    ranks[order] = np.arange(1, len(v) + 1)
    return ranks


def importance_order(values):
    """Feature indices sorted by decreasing ``|values|`` (index tie-break)."""
    v = np.abs(np.asarray(values, dtype=float))
    # lexsort sorts by the last key first
    return np.lexsort((np.arange(len(v)), -v))


def spearman_rank_corr(a, b):
    """Spearman rank correlation between two rank (or score) vectors.

    Tie-free inputs are evaluated with ``1 - 6 sum d_i^2 / (n (n^2 - 1))``;
    when either input has ties the Pearson correlation of average ranks
    is used instead.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or len(a) != len(b):
        raise ValueError(f"rank vectors must be 1-D of equal length, got {a.shape} and {b.shape}")
    n = len(a)
    if n < 2:
        raise ValueError("spearman_rank_corr needs at least 2 items")
    ra = rankdata(a)
    rb = rankdata(b)
    tie_free = len(np.unique(ra)) == n and len(np.unique(rb)) == n
    if tie_free:
        d = ra - rb
        return float(1.0 - 6.0 * np.dot(d, d) / (n * (n * n - 1)))
    ca = ra - ra.mean()
    cb = rb - rb.mean()
    denom = np.sqrt(np.dot(ca, ca) * np.dot(cb, cb))
    if denom == 0.0:
        raise ValueError("rank correlation is undefined for a constant rank vector")
    return float(np.dot(ca, cb) / denom)


def kendall_tau_distance(a, b):
    """Number of item pairs ordered differently by orderings ``a`` and ``b``."""
    a = list(a)
    b = list(b)
    if len(a) != len(b) or set(a) != set(b) or len(set(a)) != len(a):
        raise ValueError("kendall_tau_distance needs two orderings of the same items")
    pos_b = {item: i for i, item in enumerate(b)}
    mapped = [pos_b[item] for item in a]
    return sum(1 for i, j in combinations(range(len(mapped)), 2) if mapped[i] > mapped[j])


def kl_divergence(p, q, epsilon=1e-12):
    """KL(p || q) with ``q`` floored at ``epsilon``; zero-mass terms of p vanish."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"distributions must be 1-D of equal length, got {p.shape} and {q.shape}")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("distributions must be nonnegative")
    for name, v in (("p", p), ("q", q)):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} must sum to 1 (got {v.sum():.12g})")
    mask = p > 0
    val = np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], epsilon)))
    return float(max(val, 0.0))
