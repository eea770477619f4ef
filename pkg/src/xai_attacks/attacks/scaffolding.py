"""Scaffolding: route in-distribution queries to a biased model and
explainer probes to an unbiased one."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..explainers.lime import background_profile, lime_samples
from ..models.base import TrainedModel
from ..models.trees import fit_forest
from ..numerics import make_rng
from .taxonomy import TAXONOMY, AttackArtifact


@dataclass
class DetectorConfig:
    n_estimators: int = 100
    max_depth: int = 12
    probes_per_row: float = 1.0
    lime_fraction: float = 0.5
    holdout_fraction: float = 0.2
    threshold: float = 0.5
    min_accuracy: float = 0.9
    knn: int = 10
    seed: int = 0


def perturbation_set(X, categorical, n_lime, n_shap, rng):
    """Explainer-style probes around random rows of ``X``.

    LIME-style rows add Gaussian noise scaled by the column std and redraw
    categoricals from their frequencies; SHAP-style rows take a random
    subset of columns from another random row.
    """
    n, d = X.shape
    w = np.full(n, 1.0 / n)
    std, freqs = background_profile(X, w, categorical)
    lime_rows = np.empty((n_lime, d))
    for k, i in enumerate(rng.integers(0, n, n_lime)):
        Z, _ = lime_samples(X[i], std, freqs, categorical, 2, rng)
        lime_rows[k] = Z[1]
    base = X[rng.integers(0, n, n_shap)]
    donors = X[rng.integers(0, n, n_shap)]
    keep = rng.random((n_shap, d)) < 0.5
    return np.vstack([lime_rows, np.where(keep, base, donors)])


class OODDetector:
    """Forest over the raw features plus the mean distance to the ``knn``
    nearest training rows (a density cue axis-aligned splits cannot build
    on their own)."""

    def __init__(self, forest, reference, knn):
        self.forest = forest
        self.knn = knn
        self.tree = cKDTree(reference) if knn > 0 else None

    def features(self, X, exclude_self=False):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.tree is None:
            return X
        k = self.knn + 1 if exclude_self else self.knn
        dist, _ = self.tree.query(X, k=k)
        dist = np.asarray(dist).reshape(len(X), k)
        if exclude_self:
            dist = dist[:, 1:]
        return np.column_stack([X, dist.mean(axis=1)])

    def predict_scores(self, X):
        return self.forest.predict_scores(self.features(X))


class RoutingModel(TrainedModel):
    """Scores with ``biased`` when the detector calls a row in-distribution, otherwise
    zeroes the protected column and scores with ``unbiased``."""

    kind = "routing"
    differentiable = False

    def __init__(self, biased, unbiased, detector, protected_index, threshold=0.5):
        super().__init__(biased.d, getattr(biased, "feature_names", None), getattr(biased, "schema_hash", None))
        self.biased = biased
        self.unbiased = unbiased
        self.detector = detector
        self.protected_index = protected_index
        self.threshold = threshold

    def in_distribution(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.detector.predict_scores(X) >= self.threshold

    def predict_scores(self, X):
        X, single = self._check(X)
        inside = self.in_distribution(X)
        out = np.empty(X.shape[0])
        if inside.any():
            out[inside] = self.biased.predict_scores(X[inside])
        if (~inside).any():
            blind = X[~inside].copy()
            blind[:, self.protected_index] = 0.0
            out[~inside] = self.unbiased.predict_scores(blind)
        return out[0] if single else out

    def predict_margin(self, X):
        s = np.clip(self.predict_scores(X), 1e-12, 1 - 1e-12)
        return np.log(s) - np.log1p(-s)

    def params(self):
        return {"biased": self.biased.kind, "unbiased": self.unbiased.kind, "threshold": self.threshold}


def train_detector(X, categorical, cfg):
    """Detector separating rows of ``X`` (label 1) from explainer probes (label 0).

    Returns the fitted forest and its accuracy, recall on originals, and
    recall on probes over a held-out split of the labeled set.
    """
    rng = make_rng(cfg.seed, "scaffolding", "detector")
    n_probes = int(round(cfg.probes_per_row * len(X)))
    n_lime = int(round(cfg.lime_fraction * n_probes))
    probes = perturbation_set(X, categorical, n_lime, n_probes - n_lime, rng)
    Z = np.vstack([X, probes])
    y = np.concatenate([np.ones(len(X)), np.zeros(len(probes))])
    order = rng.permutation(len(Z))
    n_hold = int(round(cfg.holdout_fraction * len(Z)))
    hold, fit = order[:n_hold], order[n_hold:]
    detector = OODDetector(None, X, cfg.knn)
    # originals must not see themselves as their own neighbour
    F = np.vstack([detector.features(X, exclude_self=True), detector.features(probes)])
    detector.forest = fit_forest(F[fit], y[fit], make_rng(cfg.seed, "scaffolding", "forest"),
                                 n_estimators=cfg.n_estimators, max_depth=cfg.max_depth)
    pred = detector.forest.predict_scores(F[hold]) >= cfg.threshold
    truth = y[hold] == 1
    style = np.concatenate([np.zeros(len(X)), np.ones(n_lime), np.full(n_probes - n_lime, 2)])[hold]
    evaluation = {
        "accuracy": float(np.mean(pred == truth)),
        "recall_original": float(np.mean(pred[truth])) if truth.any() else float("nan"),
        "recall_probe": float(np.mean(~pred[~truth])) if (~truth).any() else float("nan"),
        "recall_lime_probe": float(np.mean(~pred[style == 1])) if (style == 1).any() else float("nan"),
        "recall_shap_probe": float(np.mean(~pred[style == 2])) if (style == 2).any() else float("nan"),
        "train_accuracy": float(np.mean((detector.forest.predict_scores(F[fit]) >= cfg.threshold) == (y[fit] == 1))),
        "n_labeled": int(len(Z)),
    }
    return detector, evaluation


def attack_scaffolding_ood(biased_model, unbiased_model, train, detector_cfg=None):
    cfg = detector_cfg or DetectorConfig()
    if train.protected_index is None:
        raise ValueError("training data carries no protected feature")
    categorical = train.schema.is_categorical()
    detector, evaluation = train_detector(train.X, categorical, cfg)
    warnings = []
    if evaluation["train_accuracy"] < cfg.min_accuracy:
        warnings.append(f"detector accuracy {evaluation['train_accuracy']:.3f} on its labeled set is below "
                        f"{cfg.min_accuracy}; the attack is likely weak")
    router = RoutingModel(biased_model, unbiased_model, detector, train.protected_index, cfg.threshold)
    return AttackArtifact(
        "scaffolding_ood",
        TAXONOMY["scaffolding_ood"],
        router,
        provenance={"detector": cfg.__dict__.copy(), "warnings": warnings},
        summary={"kind": "adversarial_routing_model", "biased": biased_model.kind,
                 "unbiased": unbiased_model.kind},
        metrics={"detector_" + k: v for k, v in evaluation.items()},
    )
