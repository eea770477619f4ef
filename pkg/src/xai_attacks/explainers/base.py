import json
from dataclasses import dataclass, field

import numpy as np

from ..numerics import importance_ranks
from ..tabular import Dataset


class ExplainerConfigError(ValueError):
    pass


@dataclass
class Attribution:
    """Per-feature importances of one prediction."""

    values: np.ndarray
    base_value: float
    method: str
    instance_id: int = None
    feature_names: list = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        self.base_value = float(self.base_value)
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"{self.method} produced non-finite attributions")

    @property
    def d(self):
        return len(self.values)

    def ranks(self):
        return importance_ranks(self.values)

    def to_dict(self):
        return {
            "method": self.method,
            "base_value": self.base_value,
            "values": self.values.tolist(),
            "feature_names": list(self.feature_names) if self.feature_names is not None else None,
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["values"]), d["base_value"], d["method"], feature_names=d.get("feature_names"))


@dataclass
class GlobalAttribution:
    mean_abs: np.ndarray
    signed_mean: np.ndarray
    n_instances: int
    method: str = None

    def to_dict(self):
        return {
            "method": self.method,
            "n_instances": int(self.n_instances),
            "mean_abs": self.mean_abs.tolist(),
            "signed_mean": self.signed_mean.tolist(),
        }


@dataclass
class ExplainerConfig:
    """Shared knobs for every explainer.

    ``background`` is a Dataset or a row matrix; ``background_weights``
    reweights its rows (normalized internally). ``categorical`` marks
    integer-coded columns and is taken from the Dataset schema when not
    given. ``output`` selects whether probabilities or pre-sigmoid margins
    are explained. ``sample_filter`` (LIME only) receives the raw
    perturbation matrix and returns a keep-mask; withheld rows are never
    sent to the model.
    """

    background: object = None
    background_weights: np.ndarray = None
    categorical: np.ndarray = None
    n_coalitions: int = 2048
    n_permutations: int = 10
    n_perturbations: int = 5000
    kernel_width: float = None
    ridge_lambda: float = 1.0
    ig_steps: int = 50
    output: str = "probability"
    sample_filter: object = None
    seed: int = 0
    max_batch_rows: int = 200_000
    feature_names: list = field(default=None, repr=False)

    def background_matrix(self):
        if self.background is None:
            raise ExplainerConfigError("a background dataset is required")
        B = self.background.X if isinstance(self.background, Dataset) else np.asarray(self.background, dtype=float)
        B = np.atleast_2d(B)
        if B.shape[0] == 0:
            raise ExplainerConfigError("background is empty")
        return B

    def weights(self):
        B = self.background_matrix()
        if self.background_weights is None:
            return np.full(B.shape[0], 1.0 / B.shape[0])
        w = np.asarray(self.background_weights, dtype=float).ravel()
        if len(w) != B.shape[0]:
            raise ExplainerConfigError(f"{len(w)} background weights for {B.shape[0]} rows")
        if np.any(w < 0) or w.sum() <= 0:
            raise ExplainerConfigError("background weights must be nonnegative and not all zero")
        return w / w.sum()

    def categorical_mask(self, d):
        if self.categorical is not None:
            return np.asarray(self.categorical, dtype=bool)
        if isinstance(self.background, Dataset):
            return self.background.schema.is_categorical()
        return np.zeros(d, dtype=bool)

    def names(self):
        if self.feature_names is not None:
            return list(self.feature_names)
        if isinstance(self.background, Dataset):
            return self.background.feature_names
        return None


def as_scorer(model, output="probability"):
    """Batch scoring function for a TrainedModel or plain callable."""
    if hasattr(model, "predict_scores"):
        if output == "margin":
            return model.predict_margin
        if output != "probability":
            raise ExplainerConfigError(f"unknown output {output!r}")
        return model.predict_scores
    if callable(model):
        return model
    raise TypeError(f"cannot score with {type(model).__name__}")


def global_aggregate(attrs):
    """Mean |phi| and mean phi per feature over a set of local attributions."""
    attrs = list(attrs)
    if not attrs:
        raise ValueError("global_aggregate needs at least one attribution")
    methods = {a.method for a in attrs}
    if len(methods) > 1:
        raise ValueError(f"cannot aggregate mixed methods {sorted(methods)}")
    dims = {a.d for a in attrs}
    if len(dims) > 1:
        raise ValueError(f"attributions have differing dimensions {sorted(dims)}")
    V = np.vstack([a.values for a in attrs])
    return GlobalAttribution(np.abs(V).mean(axis=0), V.mean(axis=0), len(attrs), methods.pop())


def normalize_attribution(attr):
    """Map an attribution to the simplex via ``|phi_i| / sum_j |phi_j|``."""
    v = np.abs(attr.values if isinstance(attr, Attribution) else np.asarray(attr, dtype=float))
    total = v.sum()
    if total == 0:
        raise ValueError("cannot normalize an all-zero attribution")
    return v / total
