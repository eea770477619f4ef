"""Binary classifiers behind one scoring interface."""

from dataclasses import dataclass, field

import numpy as np

from ..numerics import derive_seed, make_rng
from .base import CapabilityError, TrainedModel, TrainingError
from .io import load_model, model_from_dict, model_to_dict, save_model
from .logistic import DEFAULTS as LOGISTIC_DEFAULTS
from .logistic import LogisticModel, fit_logistic
from .mlp import PRESETS as MLP_PRESETS
from .mlp import MLPModel, build_network, fit_mlp
from .trees import FOREST_DEFAULTS, GBT_DEFAULTS, ForestModel, GBTModel, Tree, build_tree, fit_forest, fit_gbt

KINDS = ("logistic", "gbt", "mlp", "forest")


def default_hyperparameters(kind, preset="A"):
    if kind == "logistic":
        return dict(LOGISTIC_DEFAULTS)
    if kind == "gbt":
        return dict(GBT_DEFAULTS)
    if kind == "forest":
        return dict(FOREST_DEFAULTS)
    if kind == "mlp":
        if preset not in MLP_PRESETS:
            raise ValueError(f"unknown mlp preset {preset!r}; expected one of {sorted(MLP_PRESETS)}")
        return {"preset": preset, **MLP_PRESETS[preset]}
    raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")


_POSITIVE = {"max_iter", "tol", "n_estimators", "max_depth", "learning_rate", "subsample",
             "colsample_bytree", "epochs", "batch_size", "patience", "min_samples_leaf"}


@dataclass
class ModelConfig:
    kind: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def resolved(self):
        """Defaults overlaid with the user's hyperparameters (validated)."""
        user = dict(self.hyperparameters)
        base = default_hyperparameters(self.kind, user.get("preset", "A"))
        unknown = sorted(set(user) - set(base))
        if unknown:
            raise ValueError(f"unknown {self.kind} hyperparameter(s): {unknown}")
        base.update(user)
        for k in _POSITIVE & set(base):
            if not base[k] > 0:
                raise ValueError(f"{self.kind} hyperparameter {k!r} must be positive, got {base[k]!r}")
        if self.kind == "mlp":
            base["hidden_layers"] = tuple(int(h) for h in base["hidden_layers"])
        return base

    @property
    def label(self):
        if self.kind == "mlp":
            return f"mlp-{self.hyperparameters.get('preset', 'A')}"
        return self.kind


def train_model(config, train):
    """Fit the model described by ``config`` on a Dataset (deterministic per seed)."""
    y = np.asarray(train.y)
    if len(y) == 0:
        raise ValueError("training set is empty")
    if len(np.unique(y)) < 2:
        raise TrainingError("training set contains a single class")
    hp = config.resolved()
    X = train.X
    kw = {"feature_names": train.feature_names, "schema_hash": train.schema.hash()}
    if config.kind == "logistic":
        w, b, n_iter = fit_logistic(X, y, hp["max_iter"], hp["tol"], hp["l2"])
        model = LogisticModel(w, b, **kw)
        model.n_iter = n_iter
        return model
    if config.kind == "gbt":
        return fit_gbt(X, y, make_rng(config.seed, "gbt"), **hp, **kw)
    if config.kind == "forest":
        return fit_forest(X, y, make_rng(config.seed, "forest"), **hp, **kw)
    return fit_mlp(X, y, derive_seed(config.seed, "mlp"), **hp, **kw)


def predict_scores(model, X):
    return model.predict_scores(X)


def input_gradient(model, x):
    if not getattr(model, "differentiable", False):
        raise CapabilityError(f"{getattr(model, 'kind', type(model).__name__)} models are not differentiable")
    return model.input_gradient(x)


__all__ = [
    "CapabilityError", "ForestModel", "GBTModel", "KINDS", "LogisticModel", "MLPModel", "ModelConfig",
    "TrainedModel", "TrainingError", "Tree", "build_network", "build_tree", "default_hyperparameters",
    "input_gradient", "load_model", "model_from_dict", "model_to_dict", "predict_scores", "save_model",
    "train_model",
]
