"""Shapley-value explainers over an interventional (background) value function."""

from itertools import combinations
from math import comb

import numpy as np

from ..models import CapabilityError
from ..numerics import make_rng, weighted_ridge
from .base import Attribution, ExplainerConfigError, as_scorer


def shapley_kernel_weight(M, s):
    """Kernel SHAP weight of a coalition of size ``s`` among ``M`` features."""
    if s == 0 or s == M:
        return np.inf
    return (M - 1) / (comb(M, s) * s * (M - s))


def _hybrids(x, B, masks):
    """Rows ``x`` where ``mask`` is 1 and background where 0, for every mask and background row.

    Returns an array of shape ``(len(masks) * len(B), d)`` ordered mask-major.
    """
    masks = np.asarray(masks, dtype=bool)
    out = np.where(masks[:, None, :], x[None, None, :], B[None, :, :])
    return out.reshape(-1, x.size)


def coalition_values(score, x, B, w, masks, max_rows=200_000):
    """``v(S) = sum_j w_j f(x_S, b_j)`` for each mask, evaluated in chunks."""
    masks = np.asarray(masks, dtype=bool)
    per_chunk = max(1, max_rows // len(B))
    vals = np.empty(len(masks))
    for start in range(0, len(masks), per_chunk):
        chunk = masks[start:start + per_chunk]
        s = np.asarray(score(_hybrids(x, B, chunk)), dtype=float).reshape(len(chunk), len(B))
        vals[start:start + len(chunk)] = s @ w
    return vals


def _enumerate_masks(M):
    masks = []
    for s in range(1, M):
        for idx in combinations(range(M), s):
            z = np.zeros(M, dtype=bool)
            z[list(idx)] = True
            masks.append(z)
    return np.array(masks)


def _sample_masks(M, n, rng):
    sizes = np.arange(1, M)
    p = np.array([(M - 1) / (s * (M - s)) for s in sizes])
    p /= p.sum()
    masks = []
    for _ in range((n + 1) // 2):
        s = rng.choice(sizes, p=p)
        z = np.zeros(M, dtype=bool)
        z[rng.choice(M, size=s, replace=False)] = True
        masks.append(z)
        masks.append(~z)
    return np.array(masks[:n])


def kernel_shap(model, x, cfg, instance_id=None):
    """Kernel SHAP with the efficiency constraint imposed exactly.

    All ``2^d - 2`` proper coalitions are enumerated (with Shapley-kernel
    regression weights) when ``d <= 12`` and the budget allows; otherwise
    coalitions are drawn with probability proportional to their kernel mass
    in complementary pairs and weighted uniformly.
    """
    x = np.asarray(x, dtype=float).ravel()
    M = x.size
    if cfg.n_coalitions < M + 2:
        raise ExplainerConfigError(f"n_coalitions={cfg.n_coalitions} is below d + 2 = {M + 2}")
    score = as_scorer(model, cfg.output)
    B = cfg.background_matrix()
    w = cfg.weights()
    fx = float(np.asarray(score(x[None, :])).ravel()[0])
    base = float(np.asarray(score(B), dtype=float) @ w)
    delta = fx - base
    if M == 1:
        return Attribution([delta], base, "kernel_shap", instance_id, cfg.names())

    if M <= 12 and cfg.n_coalitions >= 2**M - 2:
        masks = _enumerate_masks(M)
        reg_w = np.array([shapley_kernel_weight(M, s) for s in masks.sum(axis=1)])
    else:
        masks = _sample_masks(M, cfg.n_coalitions, make_rng(cfg.seed, "kernel_shap", instance_id or 0))
        reg_w = np.ones(len(masks))
    v = coalition_values(score, x, B, w, masks, cfg.max_batch_rows)
    Z = masks.astype(float)
    # substitute phi_M = delta - sum(phi_<M) to impose efficiency
    target = (v - base) - Z[:, -1] * delta
    design = Z[:, :-1] - Z[:, [-1]]
    head, _ = weighted_ridge(design, target, reg_w, 0.0, fit_intercept=False)
    phi = np.append(head, delta - head.sum())
    return Attribution(phi, base, "kernel_shap", instance_id, cfg.names())


def permutation_shap(model, x, cfg, instance_id=None):
    """Antithetic permutation sampling of Shapley values.

    Each permutation is walked forward (features switched on one at a
    time from the background) and backward (switched off in the same
    order), and all ``2d + 1`` hybrid states times the background rows go
    to the model as a single batch. Marginal contributions telescope, so
    every permutation is exactly efficient.
    """
    x = np.asarray(x, dtype=float).ravel()
    M = x.size
    score = as_scorer(model, cfg.output)
    B = cfg.background_matrix()
    w = cfg.weights()
    K = len(B)
    rng = make_rng(cfg.seed, "permutation_shap", instance_id or 0)
    phi = np.zeros(M)
    base_acc = 0.0
    for _ in range(cfg.n_permutations):
        perm = rng.permutation(M)
        masks = np.zeros((2 * M + 1, M), dtype=bool)
        for k in range(M):
            masks[k + 1] = masks[k]
            masks[k + 1, perm[k]] = True
        for k in range(M):
            masks[M + k + 1] = masks[M + k]
            masks[M + k + 1, perm[k]] = False
        s = np.asarray(score(_hybrids(x, B, masks)), dtype=float).reshape(2 * M + 1, K)
        v = s @ w
        fwd = np.diff(v[: M + 1])
        bwd = -np.diff(v[M:])
        phi[perm] += 0.5 * (fwd + bwd)
        base_acc += 0.5 * (v[0] + v[-1])
    phi /= cfg.n_permutations
    return Attribution(phi, base_acc / cfg.n_permutations, "permutation_shap", instance_id, cfg.names())


def linear_shap(model, x, background, background_weights=None, instance_id=None, feature_names=None):
    """Closed-form Shapley values of a logistic model's margin.

    ``phi_i = w_i (x_i - mu_i)`` with ``mu`` the (weighted) background mean;
    the base value is the margin at ``mu``. ``x`` may be a matrix, in which
    case a list of attributions is returned.
    """
    if getattr(model, "kind", None) != "logistic":
        raise CapabilityError("linear_shap needs a logistic model")
    B = np.atleast_2d(getattr(background, "X", background)).astype(float)
    if background_weights is None:
        mu = B.mean(axis=0)
    else:
        bw = np.asarray(background_weights, dtype=float)
        mu = bw @ B / bw.sum()
    if feature_names is None:
        feature_names = getattr(background, "feature_names", None)
    base = float(model.weights @ mu + model.intercept)
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        return Attribution(model.weights * (X - mu), base, "linear_shap", instance_id, feature_names)
    Phi = model.weights * (X - mu)
    return [Attribution(p, base, "linear_shap", i, feature_names) for i, p in enumerate(Phi)]
