"""Success criteria for fairwashing, manipulation and attack-success rate."""

import numpy as np

from ..numerics import importance_ranks, spearman_rank_corr


def _mean_abs(g):
    return np.asarray(getattr(g, "mean_abs", g), dtype=float).ravel()


def evaluate_fe_success(before, after, protected_index, epsilon1, epsilon2):
    """Fairwashing succeeds iff the protected importance falls below ``epsilon1``
    and no other feature's importance moves by ``epsilon2`` or more.

    ``epsilon2`` may be a scalar or a per-feature vector. Returns
    ``(success, deltas)`` where ``deltas`` also reports the protected
    feature's rank before and after (1 = most important).
    """
    b, a = _mean_abs(before), _mean_abs(after)
    if b.shape != a.shape:
        raise ValueError(f"attribution dimensions differ: {b.shape} vs {a.shape}")
    d = len(b)
    if not 0 <= protected_index < d:
        raise IndexError(f"protected index {protected_index} is out of range for d={d}")
    eps2 = np.broadcast_to(np.asarray(epsilon2, dtype=float), (d,))
    change = np.abs(a - b)
    others = np.array([j for j in range(d) if j != protected_index], dtype=int)
    violating = [int(j) for j in others if not change[j] < eps2[j]]
    hidden = bool(a[protected_index] < epsilon1)
    worst = int(others[np.argmax(change[others])]) if len(others) else None
    deltas = {
        "protected_before": float(b[protected_index]),
        "protected_after": float(a[protected_index]),
        "protected_hidden": hidden,
        "changes": change,
        "max_other_change": float(change[others].max()) if len(others) else 0.0,
        "max_other_feature": worst,
        "violating_features": violating,
        "protected_rank_before": int(importance_ranks(b)[protected_index]),
        "protected_rank_after": int(importance_ranks(a)[protected_index]),
    }
    return bool(hidden and not violating), deltas


def evaluate_me(before, after):
    """Spearman correlation of the |phi| importance ranks before and after."""
    b = np.asarray(getattr(before, "values", before), dtype=float).ravel()
    a = np.asarray(getattr(after, "values", after), dtype=float).ravel()
    if b.shape != a.shape:
        raise ValueError(f"attribution dimensions differ: {b.shape} vs {a.shape}")
    if len(b) < 2:
        return 1.0
    return spearman_rank_corr(importance_ranks(b), importance_ranks(a))


def evaluate_asr(results, kl_threshold=0.05):
    """Fraction of attempts that kept the label and reached KL below the threshold."""
    results = list(results)
    if not results:
        raise ValueError("evaluate_asr needs at least one result")
    wins = sum(1 for r in results if r["label_preserved"] and r["kl"] < kl_threshold)
    return wins / len(results)
