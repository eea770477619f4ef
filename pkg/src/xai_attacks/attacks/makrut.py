"""Fine-tune an MLP so its LIME explanations follow a target relevance while
hard labels stay those of the original network."""

import copy
from dataclasses import dataclass

import numpy as np
import torch

from ..explainers.lime import background_profile, lime_samples
from ..models.base import CapabilityError
from ..models.mlp import DTYPE, MLPModel
from ..numerics import derive_seed, make_rng
from .taxonomy import TAXONOMY, AttackArtifact


@dataclass
class FineTuneConfig:
    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 32
    ce_batch_size: int = 128
    n_instances: int = 400
    n_segments: int = 200
    ridge_lambda: float = 1.0
    kernel_width: float = None
    agreement_floor: float = 0.97
    patience: int = 5
    seed: int = 0


def surrogate_operators(X, background, categorical, cfg, rng):
    """Fixed LIME neighbourhoods and the linear maps from their scores to ridge coefficients.

    For instance i with interpretable design R_i (plus an intercept column)
    and kernel weights W_i, the surrogate coefficients are
    ``A_i @ f(Z_i)`` with ``A_i = (R_i' W_i R_i + L)^-1 R_i' W_i`` and L the
    ridge penalty on the non-intercept entries. Only the first d rows of
    A_i are kept.
    """
    n, d = X.shape
    m = cfg.n_segments
    w = np.full(len(background), 1.0 / len(background))
    std, freqs = background_profile(background, w, categorical)
    width = cfg.kernel_width if cfg.kernel_width is not None else 0.75 * np.sqrt(d)
    Z = np.empty((n, m, d))
    A = np.empty((n, d, m))
    pen = np.diag(np.r_[np.full(d, cfg.ridge_lambda), 0.0])
    for i in range(n):
        Zi, rep = lime_samples(X[i], std, freqs, categorical, m, rng)
        dist2 = np.sum(np.where(categorical, 1.0 - rep, rep) ** 2, axis=1)
        kw = np.exp(-dist2 / width**2)
        R = np.column_stack([rep, np.ones(m)])
        RtW = R.T * kw
        A[i] = np.linalg.solve(RtW @ R + pen, RtW)[:d]
        Z[i] = Zi
    return Z, A


def _agreement(net, X, labels):
    with torch.no_grad():
        pred = (net(torch.as_tensor(X, dtype=DTYPE)).squeeze(-1) >= 0).numpy().astype(int)
    return float(np.mean(pred == labels))


def attack_makrut(model, target_relevance=None, lambda1=1.5, lambda2=1.0, ft_cfg=None, data=None,
                  protected_index=None, categorical=None):
    """Fine-tune ``model`` on ``data`` (the training rows).

    ``target_relevance`` is a length-d vector shared by all instances or an
    (n, d) matrix aligned with ``data``. When omitted, each instance's
    original surrogate coefficients with the protected entry set to zero
    are used. The returned weights are the epoch checkpoint with the lowest
    explanation loss among those whose hard-label agreement with the
    original model on ``data`` is at least ``agreement_floor`` (the
    untouched network when none qualifies); training stops after
    ``patience`` consecutive epochs below the floor.
    """
    if getattr(model, "kind", None) != "mlp":
        raise CapabilityError(f"makrut needs an mlp model, got {getattr(model, 'kind', type(model).__name__)}")
    if data is None:
        raise ValueError("training data is required")
    cfg = ft_cfg or FineTuneConfig()
    X_all = np.asarray(getattr(data, "X", data), dtype=float)
    if categorical is None:
        categorical = data.schema.is_categorical() if hasattr(data, "schema") else np.zeros(X_all.shape[1], bool)
    if protected_index is None:
        protected_index = getattr(data, "protected_index", None)
    categorical = np.asarray(categorical, dtype=bool)
    n, d = X_all.shape
    rng = make_rng(cfg.seed, "makrut")
    idx = np.sort(rng.choice(n, min(cfg.n_instances, n), replace=False))
    X = X_all[idx]
    Z, A = surrogate_operators(X, X_all, categorical, cfg, rng)
    labels_all = model.predict_labels(X_all)

    net = model.clone_network().eval()
    Zt = torch.as_tensor(Z.reshape(-1, d), dtype=DTYPE)
    At = torch.as_tensor(A, dtype=DTYPE)
    Xt = torch.as_tensor(X_all, dtype=DTYPE)
    yt = torch.as_tensor(labels_all, dtype=DTYPE)

    def coefficients(net_, rows):
        m = cfg.n_segments
        sub = torch.cat([Zt[i * m:(i + 1) * m] for i in rows])
        s = torch.sigmoid(net_(sub).squeeze(-1)).reshape(len(rows), m)
        return torch.einsum("bdm,bm->bd", At[rows], s)

    with torch.no_grad():
        original_coef = coefficients(net, list(range(len(idx)))).numpy()
    if target_relevance is None:
        if protected_index is None:
            raise ValueError("protected_index is needed to build the default target")
        target = original_coef.copy()
        target[:, protected_index] = 0.0
    else:
        target = np.asarray(target_relevance, dtype=float)
        if target.ndim == 2 and target.shape[0] == n:
            target = target[idx]
        target = np.broadcast_to(target, (len(idx), d)).copy()
    Tt = torch.as_tensor(target, dtype=DTYPE)
    # per-instance squared error is measured relative to the original coefficient norm
    scale = torch.as_tensor(np.maximum((original_coef**2).sum(axis=1), 1e-12), dtype=DTYPE)

    bce = torch.nn.BCEWithLogitsLoss()
    all_rows = list(range(len(idx)))

    def explanation_loss():
        with torch.no_grad():
            err = ((coefficients(net, all_rows) - Tt) ** 2).sum(dim=1) / scale
        return float(err.mean())

    history = []
    best_state = copy.deepcopy(net.state_dict())
    best_loss = explanation_loss()
    agreement = 1.0
    violations = 0
    stopped_early = False
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(derive_seed(cfg.seed, "makrut", "torch"))
        opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
        gen = torch.Generator().manual_seed(derive_seed(cfg.seed, "makrut", "order"))
        for epoch in range(1, cfg.epochs + 1):
            ce_total = 0.0
            perm = torch.randperm(len(idx), generator=gen).tolist()
            ce_perm = torch.randperm(n, generator=gen)
            n_steps = -(-len(perm) // cfg.batch_size)
            ce_size = max(cfg.ce_batch_size, -(-n // n_steps))
            for step, start in enumerate(range(0, len(perm), cfg.batch_size)):
                rows = perm[start:start + cfg.batch_size]
                ce_rows = ce_perm[(step * ce_size) % n:][:ce_size]
                opt.zero_grad()
                # label loss sweeps all training rows once per epoch
                ce = bce(net(Xt[ce_rows]).squeeze(-1), yt[ce_rows])
                ex = (((coefficients(net, rows) - Tt[rows]) ** 2).sum(dim=1) / scale[rows]).mean()
                loss = lambda1 * ce + lambda2 * ex
                loss.backward()
                opt.step()
                ce_total += ce.item() * len(ce_rows)
            epoch_agreement = _agreement(net, X_all, labels_all)
            epoch_loss = explanation_loss()
            record = {"epoch": epoch, "ce": ce_total / n, "explanation": epoch_loss,
                      "agreement": epoch_agreement}
            if protected_index is not None:
                with torch.no_grad():
                    coef = coefficients(net, all_rows)
                record["protected_relevance"] = float(coef[:, protected_index].abs().mean())
            history.append(record)
            if epoch_agreement >= cfg.agreement_floor:
                violations = 0
                if epoch_loss < best_loss:
                    best_loss, agreement = epoch_loss, epoch_agreement
                    best_state = copy.deepcopy(net.state_dict())
                    record["selected"] = True
            else:
                violations += 1
                if violations > cfg.patience:
                    stopped_early = True
                    break
    net.load_state_dict(best_state)
    net.eval()
    selected = [h["epoch"] for h in history if h.get("selected")]

    with torch.no_grad():
        final_coef = coefficients(net, list(range(len(idx)))).numpy()
    manipulated = MLPModel(net.eval(), d, model.architecture, feature_names=model.feature_names,
                           schema_hash=model.schema_hash)
    manipulated.history = history
    metrics = {
        "agreement": agreement,
        "agreement_floor": cfg.agreement_floor,
        "epochs_run": len(history),
        "selected_epoch": selected[-1] if selected else 0,
        "stopped_early": stopped_early,
        "surrogate_mean_abs_before": np.abs(original_coef).mean(axis=0),
        "surrogate_mean_abs_after": np.abs(final_coef).mean(axis=0),
    }
    return AttackArtifact(
        "makrut",
        TAXONOMY["makrut"],
        manipulated,
        provenance={"lambda1": lambda1, "lambda2": lambda2, "fine_tune": cfg.__dict__.copy(),
                    "instances": idx},
        summary={"kind": "manipulated_model", "architecture": model.params()["architecture"],
                 "history": history},
        metrics=metrics,
    )
