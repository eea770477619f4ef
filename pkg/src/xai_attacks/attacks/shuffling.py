"""Output shuffling: a scorer that ignores the protected feature, then
re-assigns its batch scores by protected group."""

import zlib

import numpy as np

from ..numerics import make_rng
from .taxonomy import TAXONOMY, AttackArtifact

VARIANTS = ("swap", "dominance", "mixing")


def swap_pass(priv):
    """One left-to-right pass over a score-sorted batch.

    ``priv[k]`` tells whether the candidate holding the k-th highest score
    is privileged. Whenever an unprivileged candidate sits directly above a
    privileged one the two exchange places; each candidate moves at most
    one slot. Returns the candidate order after the pass.
    """
    n = len(priv)
    order = np.arange(n)
    i = 0
    while i < n - 1:
        if not priv[order[i]] and priv[order[i + 1]]:
            order[i], order[i + 1] = order[i + 1], order[i]
            i += 2
        else:
            i += 1
    return order


def dominance_order(priv, participants=None):
    """Fixpoint of repeated swap passes: privileged before unprivileged.

    Relative order within each group is kept (the fixpoint of adjacent
    exchanges is the stable partition). With ``participants`` only those
    slots are partitioned; the others keep their candidates.
    """
    n = len(priv)
    order = np.arange(n)
    slots = np.arange(n) if participants is None else np.flatnonzero(participants)
    members = order[slots]
    p = np.asarray(priv)[members]
    order[slots] = np.concatenate([members[p], members[~p]])
    return order


class ShuffledScorer:
    """Batch scorer ``a(X)`` built on a base scorer blind to the protected column.

    The protected column is overwritten with ``neutral_value`` before the
    base scorer sees the batch;
    the resulting scores are sorted descending and reassigned per the
    variant. Only the candidate-to-score assignment changes, never the
    multiset of scores.
    """

    def __init__(self, base_scores_fn, protected_index, variant="swap", mixing_rate=0.7, seed=0,
                 privileged_value=1.0, neutral_value=0.0):
        if variant not in VARIANTS:
            raise ValueError(f"unknown shuffling variant {variant!r}; expected one of {VARIANTS}")
        if not 0 <= mixing_rate <= 1:
            raise ValueError("mixing_rate must lie in [0, 1]")
        self.base_scores_fn = base_scores_fn
        self.protected_index = protected_index
        self.variant = variant
        self.mixing_rate = mixing_rate
        self.seed = seed
        self.privileged_value = privileged_value
        self.neutral_value = neutral_value

    def base_scores(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        blind = X.copy()
        blind[:, self.protected_index] = self.neutral_value
        return np.asarray(self.base_scores_fn(blind), dtype=float)

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        scores = self.base_scores(X)
        if len(scores) < 2:
            return scores
        ranked = np.argsort(-scores, kind="mergesort")
        priv = X[ranked, self.protected_index] == self.privileged_value
        if self.variant == "swap":
            order = swap_pass(priv)
        elif self.variant == "dominance":
            order = dominance_order(priv)
        else:
            # a batch is always shuffled the same way
            rng = make_rng(self.seed, "mixing", zlib.crc32(X.tobytes()))
            order = dominance_order(priv, rng.random(len(priv)) < self.mixing_rate)
        out = np.empty_like(scores)
        out[ranked[order]] = scores[ranked]
        return out

    predict_scores = __call__

    def predict_margin(self, X):
        s = np.clip(self(X), 1e-12, 1 - 1e-12)
        return np.log(s) - np.log1p(-s)

    def predict_labels(self, X):
        return (self(X) >= 0.5).astype(int)


def attack_output_shuffling(base_scores_fn, protected_index, variant="swap", mixing_rate=0.7, seed=0,
                            neutral_value=0.0):
    scorer = ShuffledScorer(base_scores_fn, protected_index, variant, mixing_rate, seed, neutral_value=neutral_value)
    return AttackArtifact(
        "output_shuffling",
        TAXONOMY["output_shuffling"],
        scorer,
        provenance={"variant": variant, "mixing_rate": mixing_rate, "seed": seed,
                    "protected_index": protected_index, "neutral_value": neutral_value},
        summary={"kind": "wrapped_scoring_function", "variant": variant},
    )
