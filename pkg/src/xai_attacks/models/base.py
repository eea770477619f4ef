import numpy as np
from scipy.special import expit


class CapabilityError(TypeError):
    """The model lacks a capability (e.g. input gradients) an operation needs."""


class TrainingError(RuntimeError):
    pass


class TrainedModel:
    """Common scoring surface of every fitted classifier.

    Scores are probabilities of the positive class; the hard label is 1
    iff the score is at least 0.5. Subclasses implement ``predict_margin``
    (pre-sigmoid output) and, when differentiable, ``margin_gradient``.
    """

    kind = None
    differentiable = False

    def __init__(self, d, feature_names=None, schema_hash=None):
        self.d = int(d)
        self.feature_names = list(feature_names) if feature_names is not None else None
        self.schema_hash = schema_hash

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.d:
            raise ValueError(f"{self.kind} model expects {self.d} columns, got {X.shape[1]}")
        return X, single

    def predict_margin(self, X):
        raise NotImplementedError

    def predict_scores(self, X):
        X, single = self._check(X)
        s = expit(self.predict_margin(X))
        return s[0] if single else s

    def predict_labels(self, X):
        return (np.asarray(self.predict_scores(X)) >= 0.5).astype(int)

    def margin_gradient(self, X):
        raise CapabilityError(f"{self.kind} models are not differentiable")

    def input_gradient(self, X):
        """Gradient of the score (probability) with respect to the input."""
        if not self.differentiable:
            raise CapabilityError(f"{self.kind} models are not differentiable")
        X, single = self._check(X)
        s = expit(self.predict_margin(X))
        g = (s * (1 - s))[:, None] * self.margin_gradient(X)
        return g[0] if single else g

    def params(self):
        raise NotImplementedError

    def __call__(self, X):
        return self.predict_scores(X)
