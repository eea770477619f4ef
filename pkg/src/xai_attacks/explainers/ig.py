import numpy as np

from ..models import CapabilityError
from .base import Attribution, ExplainerConfigError


def _gradient_fn(model, output):
    if hasattr(model, "input_gradient"):
        if not getattr(model, "differentiable", False):
            raise CapabilityError(f"{model.kind} models are not differentiable")
        return model.margin_gradient if output == "margin" else model.input_gradient
    raise CapabilityError("integrated_gradients needs a model exposing input gradients")


def _value_fn(model, output):
    return model.predict_margin if output == "margin" else model.predict_scores


def integrated_gradients(model, x, baseline=None, steps=50, output="probability", instance_id=None,
                         feature_names=None):
    """Path-integrated gradients from ``baseline`` (default: zeros) to ``x``.

    Midpoint rule with ``steps`` evaluation points, all sent to the model
    in one gradient batch.
    """
    if steps < 10:
        raise ExplainerConfigError("integrated_gradients needs steps >= 10")
    grad = _gradient_fn(model, output)
    x = np.asarray(x, dtype=float).ravel()
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=float).ravel()
    alphas = (np.arange(steps) + 0.5) / steps
    path = baseline[None, :] + alphas[:, None] * (x - baseline)[None, :]
    g = np.atleast_2d(grad(path))
    phi = (x - baseline) * g.mean(axis=0)
    base = float(np.ravel(_value_fn(model, output)(baseline[None, :]))[0])
    return Attribution(phi, base, "integrated_gradients", instance_id, feature_names)


def completeness_gap(model, x, attr, baseline=None, output="probability"):
    """``sum(phi) - (f(x) - f(baseline))``."""
    x = np.asarray(x, dtype=float).ravel()
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=float)
    f = _value_fn(model, output)
    return float(attr.values.sum() - (np.ravel(f(x[None, :]))[0] - np.ravel(f(baseline[None, :]))[0]))
