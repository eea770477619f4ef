import numpy as np

from ..numerics import make_rng, weighted_ridge
from .base import Attribution, ExplainerConfigError, as_scorer


def background_profile(B, w, categorical):
    """Weighted per-column std (numerical) and category frequencies (categorical)."""
    mean = w @ B
    std = np.sqrt(np.maximum(w @ (B - mean) ** 2, 0.0))
    freqs = {}
    for j in np.flatnonzero(categorical):
        cats, inv = np.unique(B[:, j], return_inverse=True)
        freqs[j] = (cats, np.bincount(inv, weights=w, minlength=len(cats)))
    return std, freqs


def lime_samples(x, std, freqs, categorical, n, rng):
    """Perturbation matrix (first row = ``x``) and its interpretable encoding.

    Numerical columns get Gaussian noise scaled by the background std and
    are encoded as standardized offsets from ``x``; categorical columns are
    redrawn from the background frequencies and encoded as 1 when they
    match ``x``.
    """
    d = x.size
    Z = np.repeat(x[None, :], n, axis=0)
    num = np.flatnonzero(~categorical)
    Z[1:, num] += rng.standard_normal((n - 1, len(num))) * std[num]
    for j, (cats, p) in freqs.items():
        Z[1:, j] = rng.choice(cats, size=n - 1, p=p / p.sum())
    rep = np.zeros((n, d))
    safe = np.where(std > 0, std, 1.0)
    rep[:, num] = (Z[:, num] - x[num]) / safe[num]
    cat = np.flatnonzero(categorical)
    rep[:, cat] = (Z[:, cat] == x[cat]).astype(float)
    return Z, rep


def lime_tabular(model, x, cfg, instance_id=None):
    """Local weighted-ridge surrogate around ``x``; values are its coefficients."""
    x = np.asarray(x, dtype=float).ravel()
    d = x.size
    n = cfg.n_perturbations
    if n < d + 2:
        raise ExplainerConfigError(f"n_perturbations={n} is below d + 2 = {d + 2}")
    score = as_scorer(model, cfg.output)
    B = cfg.background_matrix()
    w = cfg.weights()
    categorical = cfg.categorical_mask(d)
    std, freqs = background_profile(B, w, categorical)
    rng = make_rng(cfg.seed, "lime", instance_id or 0)
    Z, rep = lime_samples(x, std, freqs, categorical, n, rng)
    if cfg.sample_filter is not None:
        keep = np.asarray(cfg.sample_filter(Z), dtype=bool)
        keep[0] = True
        Z, rep = Z[keep], rep[keep]
    dist2 = np.sum(np.where(categorical, 1.0 - rep, rep) ** 2, axis=1)
    if np.all(dist2 == dist2[0]):
        raise ExplainerConfigError("all perturbation samples coincide; the kernel weighting is degenerate")
    width = cfg.kernel_width if cfg.kernel_width is not None else 0.75 * np.sqrt(d)
    kw = np.exp(-dist2 / width**2)
    y = np.asarray(score(Z), dtype=float)
    coef, intercept = weighted_ridge(rep, y, kw, cfg.ridge_lambda)
    attr = Attribution(coef, intercept, "lime", instance_id, cfg.names())
    attr.n_samples = len(Z)
    return attr
