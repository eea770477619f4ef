"""Re-weight a background sample so the protected feature's global SHAP
value shrinks, solved exactly as a min-cost flow."""

import numpy as np

from ..explainers.base import ExplainerConfig, GlobalAttribution
from ..explainers.shap import kernel_shap, linear_shap
from ..numerics import FlowNetwork, InfeasibleFlowError, min_cost_flow, wasserstein_per_feature
from .taxonomy import TAXONOMY, AttackArtifact

EXPLAINERS = ("linear", "kernel")


def ground_costs(B):
    """Pairwise L1 distances between background rows."""
    return np.abs(B[:, None, :] - B[None, :, :]).sum(axis=2)


def protected_contributions(model, foreground, B, protected_index, explainer, kernel_cfg=None):
    """Signed GSV of the protected feature when the background is the single row ``B[j]``.

    Shapley values are linear in the background weights, so the GSV under
    integer weights ``w`` (total mass M) is ``sum_j w_j c_j / M``.
    """
    F = np.atleast_2d(foreground)
    if explainer == "linear":
        return np.array([model.weights[protected_index] * (F[:, protected_index].mean() - b[protected_index])
                         for b in B])
    base = kernel_cfg or ExplainerConfig()
    out = np.empty(len(B))
    for j, b in enumerate(B):
        cfg = ExplainerConfig(background=b[None, :], n_coalitions=base.n_coalitions, output=base.output,
                              seed=base.seed)
        out[j] = np.mean([kernel_shap(model, x, cfg, i).values[protected_index] for i, x in enumerate(F)])
    return out


def solve_weights(contrib, ground, lam, mass=None, max_weight=None):
    """Integer weights minimizing ``sum_j w_j c_j / M + lam * T(w)``.

    ``T`` is the optimal transport cost from the uniform unit-mass
    background to ``w / M`` under the ground metric ``ground``. One supply
    node per original row ships its share to candidate rows; candidate
    in-flow is the weight.
    """
    contrib = np.asarray(contrib, dtype=float)
    n = len(contrib)
    M = n if mass is None else int(mass)
    if M < 1:
        raise ValueError("total mass must be positive")
    cap_in = -(-M // n)
    cap_out = M if max_weight is None else int(max_weight)
    if n * cap_out < M:
        raise InfeasibleFlowError(f"mass {M} exceeds the capacity of {n} candidates at max weight {cap_out}")
    source, sink = 0, 2 * n + 1
    net = FlowNetwork(2 * n + 2, source, sink, M)
    for i in range(n):
        net.add_arc(source, 1 + i, cap_in, 0.0)
    move = {}
    for i in range(n):
        for j in range(n):
            move[i, j] = net.add_arc(1 + i, 1 + n + j, cap_in, lam * ground[i, j] / M + contrib[j] / M)
    out_arcs = [net.add_arc(1 + n + j, sink, cap_out, 0.0) for j in range(n)]
    flows, cost = min_cost_flow(net)
    weights = np.array([flows[a] for a in out_arcs], dtype=int)
    transport = sum(flows[move[i, j]] * ground[i, j] for i in range(n) for j in range(n)) / M
    return weights, float(cost), float(transport)


def attack_biased_sampling(model, background, protected_index, lam=1.0, explainer="linear", foreground=None,
                           mass=None, max_weight=None, kernel_cfg=None, min_rows=10):
    """Choose integer background weights that shrink the protected feature's signed GSV.

    The cost of candidate row j is its protected contribution times the
    sign of the uniform-weight GSV, which pushes the GSV toward (and
    possibly past) zero; ``lam`` prices the transport away from the
    original sample. ``foreground`` are the explained instances.
    """
    if explainer not in EXPLAINERS:
        raise ValueError(f"unknown explainer {explainer!r}; expected one of {EXPLAINERS}")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if foreground is None:
        raise ValueError("foreground instances are required")
    B = np.atleast_2d(np.asarray(getattr(background, "X", background), dtype=float))
    if len(B) < min_rows:
        raise ValueError(f"background has {len(B)} rows; at least {min_rows} are required")
    F = np.atleast_2d(np.asarray(getattr(foreground, "X", foreground), dtype=float))
    contrib = protected_contributions(model, F, B, protected_index, explainer, kernel_cfg)
    uniform_gsv = float(contrib.mean())
    # a zero GSV leaves nothing to shrink; only transport is priced and uniform weights win
    sign = float(np.sign(uniform_gsv))
    weights, cost, transport = solve_weights(sign * contrib, ground_costs(B), lam, mass, max_weight)
    M = weights.sum()
    after_gsv = float(weights @ contrib / M)

    before = _global(model, F, B, None, explainer, kernel_cfg)
    after = _global(model, F, B, weights, explainer, kernel_cfg)
    metrics = {
        "gsv_protected_before": uniform_gsv,
        "gsv_protected_after": after_gsv,
        "relative_reduction": 1.0 - abs(after_gsv) / abs(uniform_gsv) if uniform_gsv != 0 else 0.0,
        "objective": cost,
        "transport_cost": transport,
        "wasserstein_per_feature": wasserstein_per_feature(B[weights > 0], B, weights[weights > 0] / M, None),
        "support_size": int(np.count_nonzero(weights)),
        "mean_abs_before": before.mean_abs,
        "mean_abs_after": after.mean_abs,
    }
    return AttackArtifact(
        "biased_sampling",
        TAXONOMY["biased_sampling"],
        weights,
        provenance={"lambda": lam, "explainer": explainer, "mass": int(M), "protected_index": protected_index},
        summary={"kind": "background_weights", "weights": weights, "before": before, "after": after},
        metrics=metrics,
    )


def _global(model, F, B, weights, explainer, kernel_cfg):
    if explainer == "linear":
        attrs = linear_shap(model, F, B, weights)
    else:
        base = kernel_cfg or ExplainerConfig()
        cfg = ExplainerConfig(background=B, background_weights=weights, n_coalitions=base.n_coalitions,
                              output=base.output, seed=base.seed)
        attrs = [kernel_shap(model, x, cfg, i) for i, x in enumerate(F)]
    V = np.vstack([a.values for a in attrs])
    return GlobalAttribution(np.abs(V).mean(axis=0), V.mean(axis=0), len(V), attrs[0].method)
