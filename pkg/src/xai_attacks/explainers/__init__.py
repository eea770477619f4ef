"""Post-hoc local attribution methods and their aggregation."""

import numpy as np

from ..numerics import importance_ranks
from .base import (
    Attribution,
    ExplainerConfig,
    ExplainerConfigError,
    GlobalAttribution,
    as_scorer,
    global_aggregate,
    normalize_attribution,
)
from .ig import completeness_gap, integrated_gradients
from .lime import lime_tabular
from .shap import coalition_values, kernel_shap, linear_shap, permutation_shap, shapley_kernel_weight

METHODS = ("kernel_shap", "permutation_shap", "linear_shap", "lime", "integrated_gradients")


def explain(method, model, x, cfg, instance_id=None):
    """Dispatch one local explanation by method name."""
    if method == "kernel_shap":
        return kernel_shap(model, x, cfg, instance_id)
    if method == "permutation_shap":
        return permutation_shap(model, x, cfg, instance_id)
    if method == "lime":
        return lime_tabular(model, x, cfg, instance_id)
    if method == "linear_shap":
        return linear_shap(model, x, cfg.background_matrix(), cfg.background_weights, instance_id, cfg.names())
    if method == "integrated_gradients":
        return integrated_gradients(model, x, None, cfg.ig_steps, cfg.output, instance_id, cfg.names())
    raise ValueError(f"unknown explainer {method!r}; expected one of {METHODS}")


def explain_many(method, model, X, cfg):
    """Explain every row of ``X``; row ``i`` draws from its own RNG substream."""
    return [explain(method, model, x, cfg, instance_id=i) for i, x in enumerate(np.atleast_2d(X))]


def attribution_ranks(attr):
    return importance_ranks(attr.values)


__all__ = [
    "METHODS", "Attribution", "ExplainerConfig", "ExplainerConfigError", "GlobalAttribution",
    "as_scorer", "attribution_ranks", "coalition_values", "completeness_gap", "explain", "explain_many",
    "global_aggregate", "integrated_gradients", "kernel_shap", "lime_tabular", "linear_shap",
    "normalize_attribution", "permutation_shap", "shapley_kernel_weight",
]
