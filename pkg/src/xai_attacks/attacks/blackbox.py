"""Prediction-preserving search for an input whose IG explanation matches a
target distribution."""

import time
from dataclasses import dataclass

import numpy as np

from ..explainers.base import normalize_attribution
from ..explainers.ig import integrated_gradients
from ..models.base import CapabilityError
from ..numerics import finite_diff_gradient, importance_ranks, kl_divergence, spearman_rank_corr
from .taxonomy import TAXONOMY, AttackArtifact


class PrincipalManifold:
    """Linear stand-in for a learned data manifold: the top principal subspace
    of a reference set; off-manifold distance is the squared reconstruction error."""

    def __init__(self, reference, n_components=2):
        R = np.atleast_2d(np.asarray(reference, dtype=float))
        if R.shape[0] < 2:
            raise ValueError("manifold reference needs at least 2 rows")
        k = int(min(n_components, R.shape[1], R.shape[0] - 1))
        self.mean = R.mean(axis=0)
        _, _, vt = np.linalg.svd(R - self.mean, full_matrices=False)
        self.components = vt[:k]

    def reconstruction_error(self, X):
        C = np.atleast_2d(np.asarray(X, dtype=float)) - self.mean
        resid = C - (C @ self.components.T) @ self.components
        return np.sum(resid**2, axis=1)


@dataclass
class ManifoldConfig:
    reference: object = None
    n_components: int = 2


@dataclass
class OptimizerConfig:
    c1: float = 10.0
    c2: float = 0.05
    c3: float = 0.1
    max_iter: int = 30
    step: float = 0.5
    min_step: float = 1e-3
    fd_step: float = 1e-3
    ig_steps: int = 50
    ig_output: str = "probability"
    kl_threshold: float = 0.05
    perturbable: object = None
    baseline: object = None


def _explanation(model, x, cfg):
    attr = integrated_gradients(model, x, cfg.baseline, cfg.ig_steps, cfg.ig_output)
    return attr.values


def _distribution(values):
    if not np.any(values):
        # an all-zero map carries no ranking; treat it as uniform
        return np.full(len(values), 1.0 / len(values))
    return normalize_attribution(values)


def attack_black_box(model, x, target_expl, maa_cfg=None, opt_cfg=None):
    """Minimize KL(normalize(IG(x')) || target) + c1 hinge + c2 L1 + c3 manifold.

    The hinge penalizes the margin crossing zero against the original
    label; the manifold term penalizes reconstruction error beyond that of
    ``x`` itself. Each iteration takes a central-difference gradient of the
    whole loss (restricted to perturbable coordinates) and backtracks along
    it until the loss decreases.
    """
    if not getattr(model, "differentiable", False):
        raise CapabilityError(f"{getattr(model, 'kind', type(model).__name__)} models are not differentiable")
    maa = maa_cfg or ManifoldConfig()
    cfg = opt_cfg or OptimizerConfig()
    start = time.perf_counter()
    x = np.asarray(x, dtype=float).ravel()
    d = x.size
    target = np.asarray(target_expl, dtype=float).ravel()
    if target.shape != (d,) or np.any(target < 0) or abs(target.sum() - 1.0) > 1e-9:
        raise ValueError("target explanation must be a length-d distribution")
    mask = np.ones(d, dtype=bool) if cfg.perturbable is None else np.asarray(cfg.perturbable, dtype=bool)
    manifold = PrincipalManifold(maa.reference, maa.n_components) if maa.reference is not None else None
    sign = 1.0 if float(np.ravel(model.predict_margin(x[None, :]))[0]) >= 0 else -1.0
    label0 = int(sign > 0)
    recon0 = float(manifold.reconstruction_error(x)[0]) if manifold is not None else 0.0

    def kl_at(z):
        return kl_divergence(_distribution(_explanation(model, z, cfg)), target)

    def loss(z):
        m = float(np.ravel(model.predict_margin(z[None, :]))[0])
        val = kl_at(z) + cfg.c1 * max(0.0, -sign * m) + cfg.c2 * np.abs(z - x).sum()
        if manifold is not None:
            val += cfg.c3 * max(0.0, float(manifold.reconstruction_error(z)[0]) - recon0)
        return val

    def sub_loss(u):
        z = z_cur.copy()
        z[mask] = u
        return loss(z)

    z_cur = x.copy()
    cur = loss(z_cur)
    trace = [cur]
    step = cfg.step
    n_iter = 0
    for n_iter in range(1, cfg.max_iter + 1):
        if kl_at(z_cur) < cfg.kl_threshold and label_of(model, z_cur) == label0:
            n_iter -= 1
            break
        g = np.zeros(d)
        g[mask] = finite_diff_gradient(sub_loss, z_cur[mask], cfg.fd_step)
        norm = np.linalg.norm(g)
        if norm == 0:
            break
        improved = False
        while step >= cfg.min_step:
            cand = z_cur - step * g / norm
            val = loss(cand)
            if val < cur:
                z_cur, cur, improved = cand, val, True
                step *= 1.5
                break
            step *= 0.5
        trace.append(cur)
        if not improved:
            break

    ig_before = _explanation(model, x, cfg)
    ig_after = _explanation(model, z_cur, cfg)
    kl = kl_divergence(_distribution(ig_after), target)
    preserved = label_of(model, z_cur) == label0
    ranks_b, ranks_a = importance_ranks(ig_before), importance_ranks(ig_after)
    result = {
        "label_preserved": bool(preserved),
        "kl": float(kl),
        "success": bool(preserved and kl < cfg.kl_threshold),
        "spearman": spearman_rank_corr(ranks_b, ranks_a) if d > 1 else 1.0,
        "l1_distance": float(np.abs(z_cur - x).sum()),
        "iterations": n_iter,
        "loss_trace": trace,
        "runtime_s": time.perf_counter() - start,
    }
    if manifold is not None:
        result["manifold_error"] = float(manifold.reconstruction_error(z_cur)[0])
        result["manifold_error_original"] = recon0
    return AttackArtifact(
        "black_box",
        TAXONOMY["black_box"],
        {"x": x, "x_adv": z_cur, "ig_before": ig_before, "ig_after": ig_after},
        provenance={"optimizer": {k: v for k, v in cfg.__dict__.items() if k not in ("perturbable", "baseline")},
                    "n_components": maa.n_components},
        summary={"kind": "perturbed_instance", "x": x, "x_adv": z_cur},
        metrics=result,
    )


def label_of(model, z):
    return int(float(np.ravel(model.predict_margin(z[None, :]))[0]) >= 0)
