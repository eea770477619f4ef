"""Auditor-side countermeasures: input filtering, explainer cross-checks,
a background uniformity test, and adversarial retraining."""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.spatial import cKDTree

from .explainers import ExplainerConfig, explain
from .explainers.shap import linear_shap
from .models import train_model
from .numerics import importance_ranks, make_rng, spearman_rank_corr

ZERO_TOL = 1e-12
DEFENSES = ("ood_filter", "multi_explainer", "background_uniformity", "adversarial_retraining")


@dataclass
class DefenseVerdict:
    """``flagged`` iff ``statistic`` is above (or, for ``direction="below"``,
    below) ``threshold``."""

    defense: str
    statistic: float
    threshold: float
    flagged: bool
    details: str = ""
    direction: str = "above"

    def __post_init__(self):
        if self.defense not in DEFENSES:
            raise ValueError(f"unknown defense {self.defense!r}")
        expect = self.statistic > self.threshold if self.direction == "above" else self.statistic < self.threshold
        if bool(self.flagged) != bool(expect):
            raise ValueError("flagged must follow the statistic/threshold comparison")

    def to_dict(self):
        return {"defense": self.defense, "statistic": float(self.statistic), "threshold": float(self.threshold),
                "flagged": bool(self.flagged), "direction": self.direction, "details": self.details}


@dataclass
class OODFilterConfig:
    quantile: float = 0.99
    z_slack: float = 1.0


class OODFilter:
    """Flags rows that are extreme on some feature or far from every reference row.

    Two ratios are computed per query: the largest |z|-score over its
    features divided by the largest |z| seen in the reference (times
    ``z_slack``), and its nearest-neighbour distance in the reference divided
    by the ``quantile`` of the reference's leave-one-out nearest-neighbour
    distances. The statistic is the larger ratio; a query is flagged when it
    exceeds 1. Distances use z-scored columns for numerical features and raw
    codes for categorical ones.
    """

    def __init__(self, reference, categorical=None, cfg=None):
        cfg = cfg or OODFilterConfig()
        if not 0 < cfg.quantile <= 1:
            raise ValueError("quantile must lie in (0, 1]")
        R = np.atleast_2d(np.asarray(getattr(reference, "X", reference), dtype=float))
        if len(R) == 0:
            raise ValueError("reference set is empty")
        if categorical is None:
            categorical = reference.schema.is_categorical() if hasattr(reference, "schema") else np.zeros(R.shape[1], bool)
        self.categorical = np.asarray(categorical, dtype=bool)
        self.cfg = cfg
        self.mean = R.mean(axis=0)
        std = R.std(axis=0)
        self.std = np.where(std > 0, std, 1.0)
        Zr = self._scale(R)
        num = ~self.categorical
        self.z_max = float(np.abs(Zr[:, num]).max()) * cfg.z_slack if num.any() else np.inf
        self.tree = cKDTree(Zr)
        if len(R) > 1:
            d, _ = self.tree.query(Zr, k=2)
            self.nn_threshold = float(np.quantile(d[:, 1], cfg.quantile))
        else:
            self.nn_threshold = 0.0

    def _scale(self, X):
        Z = X.copy()
        num = ~self.categorical
        Z[:, num] = (X[:, num] - self.mean[num]) / self.std[num]
        return Z

    def statistic(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = self._scale(X)
        num = ~self.categorical
        z_ratio = np.abs(Z[:, num]).max(axis=1) / self.z_max if num.any() and self.z_max > 0 else np.zeros(len(X))
        dist, _ = self.tree.query(Z, k=1)
        if self.nn_threshold > 0:
            nn_ratio = dist / self.nn_threshold
        else:
            nn_ratio = np.where(dist > 0, np.inf, 0.0)
        return np.maximum(z_ratio, nn_ratio)

    def flags(self, X):
        return self.statistic(X) > 1.0

    def keep_mask(self, X):
        return ~self.flags(X)

    __call__ = keep_mask


def defense_ood_filter(reference, queries, cfg=None, categorical=None):
    """Split ``queries`` into kept rows and one verdict per query."""
    filt = OODFilter(reference, categorical, cfg)
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    stat = filt.statistic(Q)
    verdicts = [DefenseVerdict("ood_filter", float(s), 1.0, bool(s > 1.0),
                               "withheld: off the reference distribution" if s > 1.0 else "")
                for s in stat]
    return Q[stat <= 1.0], verdicts


def defense_multi_explainer(model, x, cfg, methods=("kernel_shap", "permutation_shap", "lime"), threshold=0.5):
    """Minimum pairwise Spearman correlation between the rank vectors of several explainers."""
    if len(methods) < 2:
        raise ValueError("at least two explainer methods are needed")
    x = np.asarray(x, dtype=float).ravel()
    attrs = {m: explain(m, model, x, cfg).values for m in methods}
    # round-off from a flat model must not be ranked as signal
    attrs = {m: np.where(np.abs(v) > ZERO_TOL, v, 0.0) for m, v in attrs.items()}
    notes = [f"{m} returned an all-zero attribution" for m, v in attrs.items() if not np.any(v)]
    if x.size < 2:
        stat, pairs = 1.0, {}
    else:
        ranks = {m: importance_ranks(v) for m, v in attrs.items()}
        pairs = {f"{a}~{b}": spearman_rank_corr(ranks[a], ranks[b]) for a, b in combinations(methods, 2)}
        stat = min(pairs.values())
    details = "; ".join(notes + [f"{k}={v:.3f}" for k, v in pairs.items()])
    return DefenseVerdict("multi_explainer", float(stat), threshold, bool(stat < threshold), details, "below")


def _weighted_moments(values, weights):
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    mean = float(w @ values)
    var = float(w @ (values - mean) ** 2)
    n_eff = 1.0 / float(np.sum(w**2))
    return mean, var, n_eff


def wald_statistic(a, b, a_weights=None, b_weights=None):
    """Two-sample Wald statistic for equal (weighted) means; Kish effective sizes."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    ma, va, na = _weighted_moments(a, np.ones(len(a)) if a_weights is None else a_weights)
    mb, vb, nb = _weighted_moments(b, np.ones(len(b)) if b_weights is None else b_weights)
    se = np.sqrt(va / na + vb / nb)
    if se == 0:
        return 0.0 if ma == mb else float(np.copysign(np.inf, ma - mb))
    return float((ma - mb) / se)


def defense_background_uniformity(model, background, weights, reference, seed=0, threshold=1.96,
                                  n_reference=None):
    """Wald test of mean model output on the weighted background against a reference sample.

    ``n_reference`` rows are drawn from ``reference`` without replacement
    (all rows when None).
    """
    R = np.atleast_2d(np.asarray(getattr(reference, "X", reference), dtype=float))
    if len(R) < 10:
        raise ValueError(f"reference has {len(R)} rows; at least 10 are required")
    if n_reference is not None and n_reference < len(R):
        R = R[np.sort(make_rng(seed, "uniformity").choice(len(R), n_reference, replace=False))]
    B = np.atleast_2d(np.asarray(getattr(background, "X", background), dtype=float))
    w = np.ones(len(B)) if weights is None else np.asarray(weights, dtype=float)
    keep = w > 0
    stat = wald_statistic(model.predict_scores(B[keep]), model.predict_scores(R), w[keep], None)
    return DefenseVerdict("background_uniformity", abs(stat), threshold, bool(abs(stat) > threshold),
                          f"W={stat:.4f} over {int(keep.sum())} weighted rows vs {len(R)} reference rows")


def gaussian_noise_rows(train, copies=1, std=0.1, seed=0):
    """Noisy copies of the training rows (numerical columns only), labels kept."""
    X = train.X
    num = ~train.schema.is_categorical()
    rng = make_rng(seed, "noise_augmentation")
    rows, labels = [], []
    for _ in range(copies):
        Z = X.copy()
        Z[:, num] += rng.normal(0.0, std, (len(X), int(num.sum())))
        rows.append(Z)
        labels.append(train.y)
    return np.vstack(rows), np.concatenate(labels)


@dataclass
class RetrainingReport:
    n_adversarial: int
    stability: float
    per_probe: list = field(default_factory=list)

    def to_dict(self):
        return {"n_adversarial": self.n_adversarial, "stability": self.stability, "per_probe": self.per_probe}


def _default_explainer(train):
    rng = make_rng(0, "retraining", "background")
    B = train.X[np.sort(rng.choice(train.n, min(50, train.n), replace=False))]

    def fn(model, x):
        if model.kind == "logistic":
            return linear_shap(model, x, B).values
        return explain("kernel_shap", model, x, ExplainerConfig(background=B, n_coalitions=512)).values
    return fn


def defense_adversarial_retraining(model_cfg, train, adversarial_rows, adversarial_labels=None, probes=None,
                                   baseline=None, explain_fn=None):
    """Retrain from scratch on ``train`` plus the adversarial rows.

    Returns the retrained model with a ``retraining_report`` attribute
    holding the mean Spearman correlation between the baseline's and the
    retrained model's attribution ranks on ``probes``.
    """
    A = np.asarray(adversarial_rows, dtype=float)
    if A.size == 0:
        A = np.empty((0, train.d))
    A = np.atleast_2d(A)
    if A.shape[1] != train.d:
        raise ValueError(f"adversarial rows have {A.shape[1]} columns, expected {train.d}")
    if len(A) and adversarial_labels is None:
        raise ValueError("adversarial rows need labels")
    yA = np.asarray(adversarial_labels if adversarial_labels is not None else [], dtype=int)
    union = train if len(A) == 0 else type(train)(train.schema, np.vstack([train.X, A]),
                                                  np.concatenate([train.y, yA]), train.protected_index)
    model = train_model(model_cfg, union)
    report = RetrainingReport(int(len(A)), float("nan"))
    if probes is not None:
        base = baseline if baseline is not None else train_model(model_cfg, train)
        fn = explain_fn or _default_explainer(train)
        P = np.atleast_2d(np.asarray(probes, dtype=float))
        rho = []
        for x in P:
            a, b = fn(base, x), fn(model, x)
            rho.append(spearman_rank_corr(importance_ranks(a), importance_ranks(b)) if len(a) > 1 else 1.0)
        report = RetrainingReport(int(len(A)), float(np.mean(rho)), rho)
    model.retraining_report = report
    return model
