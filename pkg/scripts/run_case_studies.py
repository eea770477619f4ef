"""Directional case studies on synthetic biased data.

Each study trains its own models, runs one attack (and, where one exists,
its defense) and prints a short summary. Results are also written as JSON.

    python scripts/run_case_studies.py                 # every study
    python scripts/run_case_studies.py shuffling makrut --out runs/cases.json
"""

import argparse
import json
import logging
import time
from pathlib import Path

import numpy as np

from xai_attacks.attacks import (
    DetectorConfig,
    FineTuneConfig,
    GAConfig,
    ManifoldConfig,
    OptimizerConfig,
    ShuffledScorer,
    attack_biased_sampling,
    attack_black_box,
    attack_data_poisoning_genetic,
    attack_makrut,
    attack_scaffolding_ood,
)
from xai_attacks.defenses import OODFilter, OODFilterConfig, defense_background_uniformity
from xai_attacks.explainers import (
    ExplainerConfig,
    global_aggregate,
    integrated_gradients,
    lime_tabular,
    linear_shap,
    normalize_attribution,
    permutation_shap,
)
from xai_attacks.harness.report import to_jsonable
from xai_attacks.harness.runner import adversarial_target
from xai_attacks.models import ModelConfig, train_model
from xai_attacks.numerics import importance_ranks
from xai_attacks.tabular import generate_synthetic_biased, preprocess, split

log = logging.getLogger("case_studies")


def biased_data(d_numerical=5, seed=0, n_rows=2000):
    ds = generate_synthetic_biased(n_rows, d_numerical, 0.8, seed=seed)
    pair = split(ds, 0.2, seed=0)
    train, stats, _ = preprocess(pair.train)
    test, _, _ = preprocess(pair.test, fit_stats=stats)
    return train, test


def blind_logistic(train):
    X0 = train.X.copy()
    X0[:, train.protected_index] = 0.0
    return train_model(ModelConfig("logistic"), train.with_X(X0))


def study_shuffling(args):
    train, test = biased_data(seed=args.seed)
    p = train.protected_index
    f = train_model(ModelConfig("logistic"), train)
    B = train.X[np.random.default_rng(args.seed).choice(train.n, 50)]
    cfg = ExplainerConfig(background=B, n_permutations=10)
    panel = test.X[: args.panel]

    def gsv(model):
        return global_aggregate([permutation_shap(model, x, cfg, i) for i, x in enumerate(panel)]).mean_abs
    base = gsv(f)
    out = {"baseline_protected": base[p]}
    for variant in ("swap", "dominance", "mixing"):
        g = gsv(ShuffledScorer(f.predict_scores, p, variant, neutral_value=0.0))
        out[f"{variant}_protected"] = g[p]
        out[f"{variant}_ratio"] = g[p] / base[p]
    return out


def study_scaffolding(args):
    train, test = biased_data(d_numerical=20, seed=args.seed)
    p = train.protected_index
    f = train_model(ModelConfig("logistic"), train)
    art = attack_scaffolding_ood(f, blind_logistic(train), train, DetectorConfig(lime_fraction=0.5))
    router = art.payload
    cfg = ExplainerConfig(background=train, n_perturbations=1000)
    filtered = ExplainerConfig(background=train, n_perturbations=5000,
                               sample_filter=OODFilter(train, cfg=OODFilterConfig(quantile=0.5)))
    top3 = dropped = 0
    plain_f, plain_r, filt_r = [], [], []
    for i, x in enumerate(test.X[: args.panel]):
        a_f, a_r = lime_tabular(f, x, cfg, i), lime_tabular(router, x, cfg, i)
        plain_f.append(a_f)
        plain_r.append(a_r)
        filt_r.append(lime_tabular(router, x, filtered, i))
        if importance_ranks(a_f.values)[p] <= 3:
            top3 += 1
            dropped += importance_ranks(a_r.values)[p] > 3
    return {
        "accuracy_biased": np.mean(f.predict_labels(test.X) == test.y),
        "accuracy_routing": np.mean(router.predict_labels(test.X) == test.y),
        "top3_under_biased": top3,
        "dropped_from_top3": dropped,
        "protected_biased": global_aggregate(plain_f).mean_abs[p],
        "protected_routing": global_aggregate(plain_r).mean_abs[p],
        "protected_routing_filtered": global_aggregate(filt_r).mean_abs[p],
        "detector": art.metrics,
        "warnings": art.provenance["warnings"],
    }


def study_poisoning(args):
    train, test = biased_data(seed=args.seed)
    p = train.protected_index
    f = train_model(ModelConfig("logistic"), train)
    panel, B = test.X[: args.panel], train.X[:100]

    def g(Bp):
        return global_aggregate(linear_shap(f, panel, Bp)).mean_abs
    target = g(B)
    target[p] = 0.0
    runs = []
    for s in range(args.repeats):
        art = attack_data_poisoning_genetic(g, target, ~train.schema.is_categorical(),
                                            GAConfig(generations=args.generations, seed=s), data=B,
                                            predict_fn=f.predict_labels)
        m = art.metrics
        runs.append({"seed": s, "spearman": m["spearman"], "initial_fitness": m["initial_fitness"],
                     "best_fitness": m["best_fitness"], "prediction_agreement": m["prediction_agreement"]})
    return {"runs": runs, "min_spearman": min(r["spearman"] for r in runs)}


def study_black_box(args):
    train, test = biased_data(seed=args.seed)
    f = train_model(ModelConfig("mlp", {"preset": "B"}), train)
    maa = ManifoldConfig(train.X[:200])
    opt = OptimizerConfig(perturbable=~train.schema.is_categorical())
    rows = []
    for x in test.X[: args.panel]:
        ig = integrated_gradients(f, x).values
        ident = attack_black_box(f, x, normalize_attribution(ig), maa, opt).metrics
        adv = attack_black_box(f, x, adversarial_target(ig), maa, opt).metrics
        rows.append({"identity_success": ident["success"], "success": adv["success"], "kl": adv["kl"],
                     "spearman": adv["spearman"], "runtime_s": adv["runtime_s"]})
    n = len(rows)
    return {"asr": sum(r["success"] for r in rows) / n, "asr_identity": sum(r["identity_success"] for r in rows) / n,
            "mean_spearman": np.mean([r["spearman"] for r in rows]), "per_sample": rows}


def study_makrut(args):
    train, test = biased_data(seed=args.seed)
    p = train.protected_index
    f = train_model(ModelConfig("mlp", {"preset": "A"}), train)
    art = attack_makrut(f, None, 1.5, 1.0, FineTuneConfig(epochs=30, learning_rate=1e-3), data=train)
    g = art.payload
    cfg = ExplainerConfig(background=train, n_perturbations=1000, seed=7)
    before = np.mean([abs(lime_tabular(f, x, cfg, i).values[p]) for i, x in enumerate(test.X[: args.panel])])
    after = np.mean([abs(lime_tabular(g, x, cfg, i).values[p]) for i, x in enumerate(test.X[: args.panel])])
    return {"protected_before": before, "protected_after": after, "relative_drop": 1 - after / before,
            "train_agreement": np.mean(f.predict_labels(train.X) == g.predict_labels(train.X)),
            "selected_epoch": art.metrics["selected_epoch"]}


def study_biased_sampling(args):
    train, test = biased_data(seed=args.seed)
    p = train.protected_index
    f = train_model(ModelConfig("logistic"), train)
    fg = test.X[f.predict_labels(test.X) == 1][: args.panel]
    B = train.X[np.random.default_rng(args.seed).choice(train.n, 100, replace=False)]
    out = {}
    for lam in (0.0, 0.5, 1.0, 5.0, 100.0):
        art = attack_biased_sampling(f, B, p, lam, "linear", foreground=fg)
        m = art.metrics
        verdict = defense_background_uniformity(f, B, art.payload, train)
        out[f"lambda={lam:g}"] = {"gsv_before": m["gsv_protected_before"], "gsv_after": m["gsv_protected_after"],
                                  "relative_reduction": m["relative_reduction"], "support": m["support_size"],
                                  "transport": m["transport_cost"], "wald": verdict.statistic,
                                  "flagged": verdict.flagged}
    return out


STUDIES = {
    "shuffling": study_shuffling,
    "scaffolding": study_scaffolding,
    "poisoning": study_poisoning,
    "black_box": study_black_box,
    "makrut": study_makrut,
    "biased_sampling": study_biased_sampling,
}


def _print(name, result, indent=2):
    pad = " " * indent
    for k, v in result.items():
        if isinstance(v, dict):
            print(f"{pad}{k}:")
            _print(k, v, indent + 2)
        elif isinstance(v, list):
            print(f"{pad}{k}: [{len(v)} records]")
        elif isinstance(v, (float, np.floating)):
            print(f"{pad}{k}: {float(v):.4f}")
        else:
            print(f"{pad}{k}: {v}")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("studies", nargs="*", help=f"subset of {', '.join(STUDIES)} (default: all)")
    parser.add_argument("--seed", type=int, default=0, help="data seed")
    parser.add_argument("--panel", type=int, default=50, help="explained test instances per study")
    parser.add_argument("--generations", type=int, default=500, help="GA generations for poisoning")
    parser.add_argument("--repeats", type=int, default=10, help="GA seeds for poisoning")
    parser.add_argument("--out", type=Path, default=None, help="write all results to this JSON file")
    args = parser.parse_args(argv)
    unknown = [s for s in args.studies if s not in STUDIES]
    if unknown:
        parser.error(f"unknown studies {unknown}; choose from {list(STUDIES)}")
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    results = {}
    for name in args.studies or list(STUDIES):
        t0 = time.perf_counter()
        res = STUDIES[name](args)
        res["runtime_s"] = time.perf_counter() - t0
        results[name] = res
        print(f"[{name}]")
        _print(name, res)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(to_jsonable(results), indent=2) + "\n")
        log.info("wrote %s", args.out)


if __name__ == "__main__":
    main()
