import numpy as np
from scipy.special import expit

from .base import TrainedModel, TrainingError

DEFAULTS = {"max_iter": 10000, "tol": 1e-4, "l2": 1e-4}


class LogisticModel(TrainedModel):
    kind = "logistic"
    differentiable = True

    def __init__(self, weights, intercept, **kw):
        weights = np.asarray(weights, dtype=float).ravel()
        super().__init__(len(weights), **kw)
        self.weights = weights
        self.intercept = float(intercept)
        self.n_iter = None

    def predict_margin(self, X):
        X, single = self._check(X)
        m = X @ self.weights + self.intercept
        return m[0] if single else m

    def margin_gradient(self, X):
        X, single = self._check(X)
        g = np.broadcast_to(self.weights, X.shape).copy()
        return g[0] if single else g

    def params(self):
        return {"weights": self.weights.tolist(), "intercept": self.intercept}

    @classmethod
    def from_params(cls, p, **kw):
        return cls(p["weights"], p["intercept"], **kw)


def fit_logistic(X, y, max_iter=10000, tol=1e-4, l2=1e-4):
    """Full-batch gradient descent on the L2-penalized mean log-loss.

    The step is ``1/L`` with ``L`` the Lipschitz constant of the loss
    gradient, so the loss decreases monotonically. Stops when the largest
    gradient component falls below ``tol``.
    """
    n, d = X.shape
    Xa = np.column_stack([X, np.ones(n)])
    lip = 0.25 * np.linalg.norm(Xa, 2) ** 2 / n + l2
    step = 1.0 / lip
    theta = np.zeros(d + 1)
    penal = np.r_[np.full(d, l2), 0.0]
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(Xa @ theta)
        grad = Xa.T @ (p - y) / n + penal * theta
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"non-finite gradient at iteration {it}")
        if np.max(np.abs(grad)) < tol:
            break
        theta -= step * grad
    return theta[:d], theta[d], it
