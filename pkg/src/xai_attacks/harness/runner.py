"""End-to-end experiment pipeline: data, models, baseline explanations,
attacks, evaluation, defenses, report."""

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

import numpy as np

from ..attacks import (
    TAXONOMY,
    DetectorConfig,
    FineTuneConfig,
    GAConfig,
    ManifoldConfig,
    OptimizerConfig,
    attack_biased_sampling,
    attack_black_box,
    attack_data_poisoning_genetic,
    attack_makrut,
    attack_output_shuffling,
    attack_scaffolding_ood,
    check_taxonomy,
)
from ..defenses import (
    OODFilter,
    OODFilterConfig,
    defense_adversarial_retraining,
    defense_background_uniformity,
    defense_multi_explainer,
)
from ..explainers import ExplainerConfig, explain, global_aggregate, integrated_gradients, normalize_attribution
from ..explainers.base import GlobalAttribution
from ..explainers.shap import linear_shap
from ..models import train_model
from ..numerics import derive_seed, importance_ranks, make_rng
from ..tabular import generate_synthetic_biased, load_csv_dataset, preprocess, split
from .config import ConfigError, ExperimentConfig
from .evaluation import evaluate_asr, evaluate_fe_success, evaluate_me
from .report import ExperimentReport, emit_report

# the defense mapped to each attack
DEFENSE_FOR = {
    "output_shuffling": "multi_explainer",
    "scaffolding_ood": "ood_filter",
    "data_poisoning": "adversarial_retraining",
    "black_box": "adversarial_retraining",
    "makrut": None,
    "biased_sampling": "background_uniformity",
}


class HarnessError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.message = message


class _Context:
    """Everything an attack cell reads; never mutated once built."""

    def __init__(self, cfg, train, test, panel_idx, background):
        self.cfg = cfg
        self.train = train
        self.test = test
        self.panel_idx = panel_idx
        self.panel = test.X[panel_idx]
        self.background = background
        self.p = train.protected_index
        self.names = train.feature_names
        self.categorical = train.schema.is_categorical()
        self.primary = cfg.explainers[0]

    def explainer_cfg(self, seed, background=None, weights=None, **over):
        e = self.primary
        kw = dict(background=self.background if background is None else background, background_weights=weights,
                  categorical=self.categorical, n_coalitions=e.n_coalitions, n_permutations=e.n_permutations,
                  n_perturbations=e.n_perturbations, ig_steps=e.ig_steps, output=e.output, seed=seed,
                  feature_names=self.names)
        kw.update(over)
        return ExplainerConfig(**kw)


def load_dataset(cfg):
    ds_cfg = cfg.dataset
    if ds_cfg.source == "synthetic":
        return generate_synthetic_biased(ds_cfg.n_rows, ds_cfg.d_numerical, ds_cfg.bias_strength,
                                         seed=derive_seed(cfg.seed, "data"))
    return load_csv_dataset(ds_cfg.path, ds_cfg.feature_schema(), ds_cfg.label_column, ds_cfg.positive_label,
                            protected=cfg.protected)


def _binary_metrics(y, pred):
    y = np.asarray(y)
    pred = np.asarray(pred)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    f1 = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0
    return {"accuracy": float(np.mean(pred == y)), "f1": float(f1), "n_test": int(len(y))}


def _local(method, model, X, ecfg):
    return [explain(method, model, x, ecfg, instance_id=i) for i, x in enumerate(X)]


def _method_for(model, method):
    # linear_shap has a closed form for logistic models only
    if method == "linear_shap" and getattr(model, "kind", None) != "logistic":
        return "kernel_shap"
    return method


def _plot(names, before, after, local_before=None, local_after=None):
    plot = {"global": {"feature": list(names), "importance_before": list(np.asarray(before, dtype=float)),
                       "importance_after": list(np.asarray(after, dtype=float))}}
    if local_before and local_after:
        d = len(names)
        rb = np.array([importance_ranks(a.values) for a in local_before])
        ra = np.array([importance_ranks(a.values) for a in local_after])
        plot["rank_frequency"] = [
            {"feature": names[j], "rank": r, "count_before": int(np.sum(rb[:, j] == r)),
             "count_after": int(np.sum(ra[:, j] == r))}
            for j in range(d) for r in range(1, d + 1)
        ]
    return plot


def _fe_row(ctx, before, after):
    t = ctx.cfg.thresholds
    b = np.asarray(before.mean_abs)
    if t.fe_relative:
        eps1, eps2 = t.fe_epsilon1 * b[ctx.p], t.fe_epsilon2 * b
    else:
        eps1, eps2 = t.fe_epsilon1, t.fe_epsilon2
    success, deltas = evaluate_fe_success(before, after, ctx.p, eps1, eps2)
    return {
        "fe_success": success,
        "protected_before": deltas["protected_before"],
        "protected_after": deltas["protected_after"],
        "protected_rank_before": deltas["protected_rank_before"],
        "protected_rank_after": deltas["protected_rank_after"],
        "max_other_change": deltas["max_other_change"],
        "fe_details": {"epsilon1": eps1, "epsilon2": eps2, **deltas},
    }


def _retrained_unbiased(ctx, entry, seed):
    X0 = ctx.train.X.copy()
    X0[:, ctx.p] = 0.0
    return train_model(entry.model_config(seed), ctx.train.with_X(X0))


def _run_output_shuffling(ctx, entry, model, params, seed):
    variant = params.get("variant", "swap")
    if params.get("base", "self") == "retrained":
        base_fn = _retrained_unbiased(ctx, entry, derive_seed(seed, "unbiased")).predict_scores
    else:
        base_fn = model.predict_scores
    art = attack_output_shuffling(base_fn, ctx.p, variant, params.get("mixing_rate", 0.7), seed,
                                  params.get("neutral_value", 0.0))
    wrapped = art.payload
    method = _method_for(wrapped, params.get("explainer", ctx.primary.method))
    ecfg = ctx.explainer_cfg(seed)
    lb, la = _local(method, model, ctx.panel, ecfg), _local(method, wrapped, ctx.panel, ecfg)
    before, after = global_aggregate(lb), global_aggregate(la)
    scores = wrapped(ctx.test.X)
    base = wrapped.base_scores(ctx.test.X)
    row = {
        "prediction_agreement": float(np.mean(np.sort(scores) == np.sort(base))),
        "score_multiset_preserved": bool(np.array_equal(np.sort(scores), np.sort(base))),
        "label_agreement_with_model": float(np.mean((scores >= 0.5).astype(int) == model.predict_labels(ctx.test.X))),
        "explainer": method,
        **_fe_row(ctx, before, after),
        "plot": _plot(ctx.names, before.mean_abs, after.mean_abs, lb, la),
    }
    if "multi_explainer" in ctx.cfg.defenses:
        n = min(params.get("defense_instances", 5), len(ctx.panel))
        dcfg = ctx.explainer_cfg(seed)
        verdicts = [defense_multi_explainer(wrapped, x, dcfg, threshold=params.get("defense_threshold", 0.5))
                    for x in ctx.panel[:n]]
        stats = [v.statistic for v in verdicts]
        row.update(defense_flagged=bool(np.mean([v.flagged for v in verdicts]) >= 0.5),
                   defense_statistic=float(np.median(stats)), defense_verdicts=verdicts)
    return art, row


def _run_scaffolding_ood(ctx, entry, model, params, seed):
    psi = _retrained_unbiased(ctx, entry, derive_seed(seed, "unbiased"))
    det = DetectorConfig(**{**params.get("detector", {}), "seed": derive_seed(seed, "detector")})
    art = attack_scaffolding_ood(model, psi, ctx.train, det)
    router = art.payload
    method = _method_for(router, params.get("explainer", "lime"))
    ecfg = ctx.explainer_cfg(seed)
    lb, la = _local(method, model, ctx.panel, ecfg), _local(method, router, ctx.panel, ecfg)
    before, after = global_aggregate(lb), global_aggregate(la)
    rb = np.array([importance_ranks(a.values)[ctx.p] for a in lb])
    ra = np.array([importance_ranks(a.values)[ctx.p] for a in la])
    top = rb <= 3
    acc_b = float(np.mean(model.predict_labels(ctx.test.X) == ctx.test.y))
    acc_r = float(np.mean(router.predict_labels(ctx.test.X) == ctx.test.y))
    row = {
        "prediction_agreement": float(np.mean(router.predict_labels(ctx.test.X) == model.predict_labels(ctx.test.X))),
        "accuracy_biased": acc_b,
        "accuracy_routing": acc_r,
        "top3_panel": int(top.sum()),
        "top3_dropout": float(np.mean(ra[top] > 3)) if top.any() else None,
        "explainer": method,
        **_fe_row(ctx, before, after),
        "plot": _plot(ctx.names, before.mean_abs, after.mean_abs, lb, la),
    }
    if "ood_filter" in ctx.cfg.defenses:
        filt = OODFilter(ctx.train, ctx.categorical, OODFilterConfig(quantile=params.get("filter_quantile", 0.99)))
        fcfg = ctx.explainer_cfg(seed, sample_filter=filt,
                                 n_perturbations=params.get("filter_perturbations", 5 * ctx.primary.n_perturbations))
        lf = _local("lime", router, ctx.panel, fcfg)
        filtered = global_aggregate(lf)
        kept = float(np.mean([a.n_samples for a in lf])) / fcfg.n_perturbations
        ratio = filtered.mean_abs[ctx.p] / before.mean_abs[ctx.p] if before.mean_abs[ctx.p] > 0 else float("nan")
        row.update(defense_flagged=bool(kept < 1.0), defense_statistic=1.0 - kept,
                   filtered_protected=float(filtered.mean_abs[ctx.p]), filtered_protected_ratio=float(ratio),
                   filter_config={"quantile": filt.cfg.quantile})
    return art, row


def _global_explain_fn(ctx, model, X, seed):
    if model.kind == "logistic":
        def lin(B):
            return global_aggregate(linear_shap(model, X, B)).mean_abs
        return lin, "linear_shap"
    e = ctx.primary

    def fn(B):
        ecfg = ExplainerConfig(background=B, categorical=ctx.categorical, n_coalitions=e.n_coalitions,
                               output=e.output, seed=seed)
        return global_aggregate(_local("kernel_shap", model, X, ecfg)).mean_abs
    return fn, "kernel_shap"


def _retraining_defense(ctx, entry, model, rows, labels, seed):
    probes = ctx.panel[:10]
    retrained = defense_adversarial_retraining(entry.model_config(seed), ctx.train, rows, labels, probes,
                                               baseline=model)
    rep = retrained.retraining_report
    acc = float(np.mean(retrained.predict_labels(ctx.test.X) == ctx.test.y))
    # flagged = explanations moved under retraining (stability below the ME threshold)
    return {"defense_flagged": bool(rep.stability < ctx.cfg.thresholds.me_delta), "defense_statistic": rep.stability,
            "retrained_accuracy": acc, "retraining": rep}


def _run_data_poisoning(ctx, entry, model, params, seed):
    # kernel SHAP inside the GA loop is costly: non-linear models get a smaller panel and background
    linear = model.kind == "logistic"
    X = ctx.panel[: params.get("ga_panel", len(ctx.panel) if linear else 5)]
    B = ctx.background[: params.get("ga_background", len(ctx.background) if linear else 20)]
    fn, method = _global_explain_fn(ctx, model, X, seed)
    before = fn(B)
    target = before.copy()
    target[ctx.p] = 0.0
    ga = GAConfig(**{**params.get("ga", {}), "seed": derive_seed(seed, "ga")})
    art = attack_data_poisoning_genetic(fn, target, ~ctx.categorical, ga, data=B, predict_fn=model.predict_labels)
    after = art.payload["attribution_after"]
    rho = evaluate_me(before, after)
    trace = art.metrics["fitness_trace"]
    row = {
        "prediction_agreement": art.metrics["prediction_agreement"],
        "me_spearman": rho,
        "explanation_changed": bool(rho < ctx.cfg.thresholds.me_delta),
        "fitness_initial": trace[0],
        "fitness_final": trace[-1],
        "fitness_non_increasing": bool(np.all(np.diff(trace) <= 0)),
        "explainer": method,
        **_fe_row(ctx, GlobalAttribution(before, before, len(X), method), GlobalAttribution(after, after, len(X), method)),
        "plot": _plot(ctx.names, before, after),
    }
    if "adversarial_retraining" in ctx.cfg.defenses:
        perturbed = art.payload["perturbed"]
        row.update(_retraining_defense(ctx, entry, model, perturbed, model.predict_labels(B),
                                       derive_seed(seed, "retrain")))
    return art, row


def adversarial_target(values):
    """Target distribution that swaps the most and least important features."""
    q = normalize_attribution(values) if np.any(values) else np.full(len(values), 1.0 / len(values))
    hi, lo = int(np.argmax(q)), int(np.argmin(q))
    q = q.copy()
    q[hi], q[lo] = q[lo], q[hi]
    return 0.99 * q + 0.01 / len(q)


def _run_black_box(ctx, entry, model, params, seed):
    if not getattr(model, "differentiable", False):
        return None, {"status": "skipped", "reason": f"{model.kind} models expose no input gradients"}
    opt_kw = {**params.get("optimizer", {})}
    opt_kw.setdefault("kl_threshold", ctx.cfg.thresholds.asr_kl)
    opt_kw.setdefault("ig_steps", ctx.primary.ig_steps)
    opt = OptimizerConfig(perturbable=~ctx.categorical, **opt_kw)
    maa = ManifoldConfig(reference=ctx.background, n_components=params.get("n_components", 2))
    results, rows, labels, identity = [], [], [], []
    last = None
    for x in ctx.panel:
        ig = integrated_gradients(model, x, None, opt.ig_steps, opt.ig_output).values
        if params.get("identity_check", True):
            q = normalize_attribution(ig) if np.any(ig) else np.full(len(ig), 1.0 / len(ig))
            identity.append(attack_black_box(model, x, q, maa, opt).metrics)
        last = attack_black_box(model, x, adversarial_target(ig), maa, opt)
        results.append(last.metrics)
        if last.metrics["success"]:
            rows.append(last.payload["x_adv"])
            labels.append(int(model.predict_labels(x[None, :])[0]))
    asr = evaluate_asr(results, ctx.cfg.thresholds.asr_kl)
    rho = [r["spearman"] for r in results]
    row = {
        "prediction_agreement": float(np.mean([r["label_preserved"] for r in results])),
        "asr": asr,
        "asr_identity": evaluate_asr(identity, ctx.cfg.thresholds.asr_kl) if identity else None,
        "me_spearman": float(np.mean(rho)),
        "explanation_changed": bool(np.mean(rho) < ctx.cfg.thresholds.me_delta),
        "per_sample": [{k: r[k] for k in ("success", "label_preserved", "kl", "spearman", "iterations", "runtime_s")}
                       for r in results],
        "runtime_mean_s": float(np.mean([r["runtime_s"] for r in results])),
        "explainer": "integrated_gradients",
    }
    if "adversarial_retraining" in ctx.cfg.defenses:
        if rows:
            row.update(_retraining_defense(ctx, entry, model, np.array(rows), np.array(labels),
                                           derive_seed(seed, "retrain")))
        else:
            row.update(defense_flagged=False, defense_statistic=1.0, retraining="no successful adversarial rows")
    return last, row


def _run_makrut(ctx, entry, model, params, seed):
    if model.kind != "mlp":
        return None, {"status": "skipped", "reason": f"fine-tuning attack needs an mlp, got {model.kind}"}
    ft = FineTuneConfig(**{**params.get("fine_tune", {}), "seed": derive_seed(seed, "makrut")})
    art = attack_makrut(model, None, params.get("lambda1", 1.5), params.get("lambda2", 1.0), ft, data=ctx.train)
    manipulated = art.payload
    method = _method_for(manipulated, params.get("explainer", "lime"))
    ecfg = ctx.explainer_cfg(seed)
    lb, la = _local(method, model, ctx.panel, ecfg), _local(method, manipulated, ctx.panel, ecfg)
    before, after = global_aggregate(lb), global_aggregate(la)
    row = {
        "prediction_agreement": art.metrics["agreement"],
        "test_agreement": float(np.mean(manipulated.predict_labels(ctx.test.X) == model.predict_labels(ctx.test.X))),
        "relative_drop": float(1.0 - after.mean_abs[ctx.p] / before.mean_abs[ctx.p]) if before.mean_abs[ctx.p] else None,
        "explainer": method,
        **_fe_row(ctx, before, after),
        "plot": _plot(ctx.names, before.mean_abs, after.mean_abs, lb, la),
    }
    return art, row


def _run_biased_sampling(ctx, entry, model, params, seed):
    kind = "linear" if model.kind == "logistic" else "kernel"
    explainer = params.get("explainer", kind)
    lam = params.get("lambda", 1.0 if explainer == "linear" else 0.05)
    fg = ctx.panel[model.predict_labels(ctx.panel) == 1]
    if len(fg) == 0:
        fg = ctx.panel
    fingerprint = hashlib.sha256(json.dumps(model.params(), sort_keys=True, default=str).encode()).hexdigest()
    kcfg = ctx.explainer_cfg(seed)
    art = attack_biased_sampling(model, ctx.background, ctx.p, lam, explainer, foreground=fg, kernel_cfg=kcfg)
    after_print = hashlib.sha256(json.dumps(model.params(), sort_keys=True, default=str).encode()).hexdigest()
    before, after = art.summary["before"], art.summary["after"]
    m = art.metrics
    row = {
        "prediction_agreement": 1.0,
        "model_unchanged": fingerprint == after_print,
        "gsv_protected_before": m["gsv_protected_before"],
        "gsv_protected_after": m["gsv_protected_after"],
        "gsv_relative_reduction": m["relative_reduction"],
        "transport_cost": m["transport_cost"],
        "wasserstein_per_feature": m["wasserstein_per_feature"],
        "explainer": explainer,
        **_fe_row(ctx, before, after),
        "plot": _plot(ctx.names, before.mean_abs, after.mean_abs),
    }
    if "background_uniformity" in ctx.cfg.defenses:
        v = defense_background_uniformity(model, ctx.background, art.payload, ctx.train,
                                          seed=derive_seed(seed, "wald"))
        row.update(defense_flagged=v.flagged, defense_statistic=v.statistic, defense_verdicts=[v])
    return art, row


RUNNERS = {
    "output_shuffling": _run_output_shuffling,
    "scaffolding_ood": _run_scaffolding_ood,
    "data_poisoning": _run_data_poisoning,
    "black_box": _run_black_box,
    "makrut": _run_makrut,
    "biased_sampling": _run_biased_sampling,
}


def _run_cell(ctx, entry, model, attack):
    seed = derive_seed(ctx.cfg.seed, "cell", entry.name, attack.name)
    tax = TAXONOMY[attack.name]
    defense = DEFENSE_FOR[attack.name]
    row = {"model": entry.name, "attack": attack.name, "tactic": tax.tactic, "technique": tax.technique,
           "hardness": tax.hardness, "seed": seed, "params": attack.params, "status": "ok",
           "defense": defense if defense in ctx.cfg.defenses else ("" if defense else "not_implemented")}
    start = time.perf_counter()
    try:
        art, result = RUNNERS[attack.name](ctx, entry, model, attack.params, seed)
    except Exception as exc:
        raise HarnessError(f"attack:{attack.name}:{entry.name}", f"{type(exc).__name__}: {exc}") from exc
    if art is not None:
        check_taxonomy(attack.name, art.taxonomy)
        row["artifact"] = {"provenance": art.to_dict()["provenance"], "metrics": art.to_dict()["metrics"]}
    row.update(result)
    row["runtime_s"] = time.perf_counter() - start
    return row


def run_experiment(config, seed=None, out_dir=None, jobs=1, write=True):
    """Run the configured pipeline and (by default) write the report files.

    ``config`` is a path to a JSON config or an ExperimentConfig. A failing
    stage raises HarnessError after writing a report marked "partial".
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_json(config)
    if seed is not None:
        cfg.seed = int(seed)
    if out_dir is not None:
        cfg.output_dir = str(out_dir)
    started = time.perf_counter()
    report = ExperimentReport(config=cfg.to_dict(), seed=cfg.seed)
    stage = "ingest"

    def finish(status, error=None):
        report.status = status
        report.error = error
        report.timestamp = datetime.now(timezone.utc).isoformat()
        report.runtime_s = time.perf_counter() - started
        if write:
            emit_report(report, cfg.output_dir)
        return report

    try:
        ds = load_dataset(cfg)
        if ds.protected_index is None or ds.protected_name != cfg.protected:
            ds = type(ds)(ds.schema, ds.X, ds.y, ds.schema.index(cfg.protected), ds.row_ids)
        stage = "split"
        pair = split(ds, cfg.preprocess.test_fraction, seed=derive_seed(cfg.seed, "split"))
        stage = "preprocess"
        train, stats, dropped = preprocess(pair.train, cfg.preprocess.corr_threshold)
        test, _, _ = preprocess(pair.test, cfg.preprocess.corr_threshold, fit_stats=stats)
        report.dataset = {"n_rows": ds.n, "n_train": train.n, "n_test": test.n, "features": train.feature_names,
                          "protected": train.protected_name, "dropped": list(dropped),
                          "scaling_warnings": list(stats.warnings)}
        rng = make_rng(cfg.seed, "panel")
        panel_idx = np.sort(rng.choice(test.n, min(cfg.panel_size, test.n), replace=False))
        bg_idx = np.sort(make_rng(cfg.seed, "background").choice(train.n, min(cfg.background_size, train.n),
                                                                 replace=False))
        ctx = _Context(cfg, train, test, panel_idx, train.X[bg_idx])
        stage = "train"
        models = {}
        for entry in cfg.models:
            t0 = time.perf_counter()
            model = train_model(entry.model_config(derive_seed(cfg.seed, "model", entry.name)), train)
            models[entry.name] = model
            report.baselines[entry.name] = {"kind": entry.kind,
                                            **_binary_metrics(test.y, model.predict_labels(test.X)),
                                            "runtime_s": time.perf_counter() - t0}
        stage = "attacks"
        cells = [(entry, attack) for entry in cfg.models for attack in cfg.attacks]
        if jobs > 1 and len(cells) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                rows = list(pool.map(lambda c: _run_cell(ctx, c[0], models[c[0].name], c[1]), cells))
        else:
            rows = [_run_cell(ctx, entry, models[entry.name], attack) for entry, attack in cells]
        report.attacks = rows
    except HarnessError as exc:
        finish("partial", {"stage": exc.stage, "message": exc.message})
        raise
    except ConfigError:
        raise
    except Exception as exc:
        finish("partial", {"stage": stage, "message": f"{type(exc).__name__}: {exc}"})
        raise HarnessError(stage, f"{type(exc).__name__}: {exc}") from exc
    return finish("complete")
