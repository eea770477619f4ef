"""Acceptance criteria, each recorded as one PASS/FAIL line in the terminal summary."""

import time
from pathlib import Path

import numpy as np
import pytest

from oracles import brute_force_flow, brute_force_weights, exact_shapley, random_nonlinear, smooth_fd
from xai_attacks.attacks import (
    DetectorConfig,
    FineTuneConfig,
    GAConfig,
    ShuffledScorer,
    attack_biased_sampling,
    attack_data_poisoning_genetic,
    attack_makrut,
    attack_scaffolding_ood,
    solve_weights,
)
from xai_attacks.attacks.biased_sampling import ground_costs
from xai_attacks.defenses import OODFilter, OODFilterConfig, defense_background_uniformity
from xai_attacks.explainers import (
    ExplainerConfig,
    completeness_gap,
    global_aggregate,
    integrated_gradients,
    kernel_shap,
    lime_tabular,
    linear_shap,
    permutation_shap,
)
from xai_attacks.harness import ExperimentConfig, load_report, run_experiment
from xai_attacks.models import LogisticModel, ModelConfig, train_model
from xai_attacks.numerics import (
    FlowNetwork,
    importance_ranks,
    kendall_tau_distance,
    kl_divergence,
    min_cost_flow,
    spearman_rank_corr,
    wasserstein_1d,
)
from xai_attacks.tabular import generate_synthetic_biased, preprocess, split

pytestmark = pytest.mark.slow


class Scorer:
    def __init__(self, fn):
        self.fn = fn

    def predict_scores(self, X):
        return self.fn(X)


def biased_data(d_numerical):
    ds = generate_synthetic_biased(2000, d_numerical, 0.8, seed=0)
    pair = split(ds, 0.2, seed=0)
    train, stats, _ = preprocess(pair.train)
    test, _, _ = preprocess(pair.test, fit_stats=stats)
    return train, test


def blind_model(train):
    # same kind trained with the protected column zeroed
    X0 = train.X.copy()
    X0[:, train.protected_index] = 0.0
    return train_model(ModelConfig("logistic"), train.with_X(X0))


@pytest.fixture(scope="module")
def wide_split():
    return biased_data(20)


@pytest.fixture(scope="module")
def sampling_run(biased_split, logistic_model):
    train, test = biased_split
    f = logistic_model
    fg = test.X[f.predict_labels(test.X) == 1][:50]
    B = train.X[np.random.default_rng(0).choice(train.n, 100, replace=False)]
    return B, attack_biased_sampling(f, B, train.protected_index, 1.0, "linear", foreground=fg)


def test_c01_shapley_exactness(criterion):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        d = int(rng.integers(2, 9))
        m = LogisticModel(rng.normal(size=d), rng.normal())
        B = rng.normal(size=(30, d))
        x = rng.normal(size=d)
        phi = kernel_shap(m, x, ExplainerConfig(background=B, output="margin")).values
        worst = max(worst, np.max(np.abs(phi - m.weights * (x - B.mean(axis=0)))))
    elapsed = time.perf_counter() - t0
    ok = criterion(1, "kernel SHAP = w(x - mu) on logistic", worst <= 1e-6 and elapsed < 10,
                   f"max err {worst:.1e} over 20 pairs, {elapsed:.1f}s")
    assert ok


def test_c02_permutation_shap_vs_enumeration(criterion):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(5):
        f = random_nonlinear(rng, 4)
        B = rng.normal(size=(20, 4))
        x = rng.normal(size=4)
        phi = permutation_shap(Scorer(f), x, ExplainerConfig(background=B, n_permutations=500)).values
        worst = max(worst, np.max(np.abs(phi - exact_shapley(f, x, B))))
    elapsed = time.perf_counter() - t0
    ok = criterion(2, "permutation SHAP (500) vs exhaustive Shapley, d=4", worst <= 0.01 and elapsed < 30,
                   f"max err {worst:.4f} over 5 models, {elapsed:.1f}s")
    assert ok


def test_c03_ig_completeness(criterion, biased_split, logistic_model):
    train, test = biased_split
    t0 = time.perf_counter()
    gaps = {}
    for preset in ("A", "B"):
        m = train_model(ModelConfig("mlp", {"preset": preset}), train)
        gaps[preset] = [abs(completeness_gap(m, x, integrated_gradients(m, x, steps=200))) for x in test.X[:20]]
    x = test.X[0]
    linear_err = np.max(np.abs(integrated_gradients(logistic_model, x, output="margin").values
                               - logistic_model.weights * x))
    elapsed = time.perf_counter() - t0
    worst = max(max(g) for g in gaps.values())
    detail = ", ".join(f"mlp-{k} max gap {max(g):.2e} ({sum(v > 0.01 for v in g)}/20 above 0.01)"
                       for k, g in gaps.items())
    ok = criterion(3, "IG completeness at 200 steps; linear margin exact",
                   worst <= 0.01 and linear_err <= 1e-12 and elapsed < 10,
                   f"{detail}, linear err {linear_err:.1e}, {elapsed:.1f}s")
    assert ok


def test_c04_gradient_correctness(criterion, biased_split):
    train, _ = biased_split
    rng = np.random.default_rng(4)
    worst = {}
    for name, cfg in (("logistic", ModelConfig("logistic")), ("mlp-A", ModelConfig("mlp", {"preset": "A"})),
                      ("mlp-B", ModelConfig("mlp", {"preset": "B"}))):
        m = train_model(cfg, train)
        err = 0.0
        for x in rng.normal(size=(20, m.d)):
            fd = smooth_fd(lambda v: float(m.predict_scores(v)), x)
            err = max(err, np.max(np.abs(m.input_gradient(x) - fd)) / max(np.max(np.abs(fd)), 1e-8))
        worst[name] = err
    ok = criterion(4, "backprop vs central differences", max(worst.values()) <= 1e-3,
                   ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


def test_c05_output_shuffling(criterion, biased_split, logistic_model):
    train, test = biased_split
    p = train.protected_index
    t0 = time.perf_counter()
    B = train.X[np.random.default_rng(0).choice(train.n, 50)]
    cfg = ExplainerConfig(background=B, n_permutations=10)
    panel = test.X[:50]

    def protected_gsv(model):
        return global_aggregate([permutation_shap(model, x, cfg, i) for i, x in enumerate(panel)]).mean_abs[p]
    base = protected_gsv(logistic_model)
    ratio, multiset = {}, True
    for variant in ("swap", "dominance", "mixing"):
        s = ShuffledScorer(logistic_model.predict_scores, p, variant, mixing_rate=0.7, neutral_value=0.0)
        ratio[variant] = protected_gsv(s) / base
        multiset &= np.allclose(np.sort(s(panel)), np.sort(s.base_scores(panel)))
    elapsed = time.perf_counter() - t0
    ok = (ratio["swap"] <= 0.1 and ratio["dominance"] >= 0.5 and ratio["mixing"] >= 0.5 and multiset
          and elapsed < 300)
    criterion(5, "output shuffling hides protected under swap only",
              ok, ", ".join(f"{k} {v:.3f}" for k, v in ratio.items()) + f" of baseline, multiset kept {multiset}, "
              f"{elapsed:.1f}s")
    assert ok


def test_c06_scaffolding(criterion, wide_split):
    train, test = wide_split
    p = train.protected_index
    t0 = time.perf_counter()
    f = train_model(ModelConfig("logistic"), train)
    router = attack_scaffolding_ood(f, blind_model(train), train, DetectorConfig(lime_fraction=0.5)).payload
    cfg = ExplainerConfig(background=train, n_perturbations=1000)
    top3 = dropped = 0
    for i, x in enumerate(test.X[:50]):
        if importance_ranks(lime_tabular(f, x, cfg, i).values)[p] <= 3:
            top3 += 1
            dropped += importance_ranks(lime_tabular(router, x, cfg, i).values)[p] > 3
    acc_f = np.mean(f.predict_labels(test.X) == test.y)
    acc_r = np.mean(router.predict_labels(test.X) == test.y)
    elapsed = time.perf_counter() - t0
    ok = top3 > 0 and dropped / top3 >= 0.7 and abs(acc_f - acc_r) <= 0.02 and elapsed < 600
    criterion(6, "scaffolding drops protected from LIME top-3", ok,
              f"{dropped}/{top3} dropped, accuracy {acc_f:.4f} vs {acc_r:.4f}, {elapsed:.1f}s")
    assert ok


def test_c07_data_poisoning(criterion, biased_split, logistic_model):
    train, test = biased_split
    p = train.protected_index
    panel, B = test.X[:50], train.X[:100]

    def g(Bp):
        return global_aggregate(linear_shap(logistic_model, panel, Bp)).mean_abs
    target = g(B)
    target[p] = 0.0
    mask = ~train.schema.is_categorical()
    rho, monotone = [], True
    for s in range(10):
        art = attack_data_poisoning_genetic(g, target, mask, GAConfig(generations=500, seed=s), data=B,
                                            predict_fn=logistic_model.predict_labels)
        rho.append(art.metrics["spearman"])
        monotone &= bool(np.all(np.diff(art.metrics["fitness_trace"]) <= 0))
    ok = min(rho) >= 0.9 and monotone
    criterion(7, "GA poisoning leaves ranks intact (500 generations, 10 seeds)", ok,
              f"min Spearman {min(rho):.4f}, traces non-increasing {monotone}")
    assert ok


def test_c08_black_box_asr(criterion, tmp_path):
    cfg = ExperimentConfig.from_dict({
        "dataset": {"source": "synthetic", "n_rows": 2000, "d_numerical": 5},
        "models": [{"name": "mlp", "kind": "mlp", "hyperparameters": {"preset": "B"}}],
        "explainers": [{"method": "integrated_gradients"}],
        "panel_size": 50, "background_size": 200,
        "attacks": [{"name": "black_box"}],
    })
    run_experiment(cfg, out_dir=tmp_path)
    row = load_report(tmp_path)["attacks"][0]
    per = row["per_sample"]
    wins = sum(r["success"] for r in per)
    ok = (len(per) == 50 and row["asr"] == pytest.approx(wins / 50) and row["asr_identity"] == 1.0
          and all(-1 <= r["spearman"] <= 1 and r["runtime_s"] > 0 for r in per)
          and all(r["success"] == (r["label_preserved"] and r["kl"] < 0.05) for r in per))
    criterion(8, "black-box ASR machinery", ok,
              f"ASR {row['asr']:.2f} ({wins}/50), identity ASR {row['asr_identity']}, "
              f"mean runtime {row['runtime_mean_s']:.3f}s")
    assert ok


def test_c09_makrut(criterion, biased_split):
    train, test = biased_split
    p = train.protected_index
    t0 = time.perf_counter()
    f = train_model(ModelConfig("mlp", {"preset": "A"}), train)
    g = attack_makrut(f, None, 1.5, 1.0, FineTuneConfig(epochs=30, learning_rate=1e-3), data=train).payload
    cfg = ExplainerConfig(background=train, n_perturbations=1000, seed=7)
    before = np.mean([abs(lime_tabular(f, x, cfg, i).values[p]) for i, x in enumerate(test.X[:50])])
    after = np.mean([abs(lime_tabular(g, x, cfg, i).values[p]) for i, x in enumerate(test.X[:50])])
    agree = np.mean(f.predict_labels(train.X) == g.predict_labels(train.X))
    drop = 1 - after / before
    elapsed = time.perf_counter() - t0
    ok = drop >= 0.5 and agree >= 0.97 and elapsed < 600
    criterion(9, "fine-tuning hides protected LIME relevance", ok,
              f"relevance {before:.3f} -> {after:.3f} (drop {drop:.2f}), train agreement {agree:.4f}, {elapsed:.1f}s")
    assert ok


def test_c10_biased_sampling(criterion, sampling_run, biased_split, logistic_model):
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(30):
        n = int(rng.integers(2, 6))
        mass = int(rng.integers(1, 6))
        B = rng.normal(size=(n, 2))
        contrib = rng.normal(size=n)
        lam = float(rng.choice([0.0, 0.5, 2.0]))
        _, cost, _ = solve_weights(contrib, ground_costs(B), lam, mass)
        worst = max(worst, abs(cost - brute_force_weights(contrib, ground_costs(B), lam, mass)[0]))
    train, test = biased_split
    uniform = attack_biased_sampling(logistic_model, train.X[:30], train.protected_index, 1e6,
                                     foreground=test.X[:20]).payload
    _, art = sampling_run
    m = art.metrics
    ok = worst <= 1e-9 and np.all(uniform == 1) and m["relative_reduction"] >= 0.5
    criterion(10, "biased sampling MCF optimal and shrinks GSV", ok,
              f"max oracle gap {worst:.1e} over 30 instances, large-lambda uniform {bool(np.all(uniform == 1))}, "
              f"GSV {m['gsv_protected_before']:.3f} -> {m['gsv_protected_after']:.3f} "
              f"(reduction {m['relative_reduction']:.3f})")
    assert ok


def test_c11_defenses(criterion, sampling_run, biased_split, logistic_model, wide_split):
    train, _ = biased_split
    B, art = sampling_run
    wald = defense_background_uniformity(logistic_model, B, art.payload, train)
    accepted = 0
    for s in range(50):
        Bn = train.X[np.random.default_rng(1000 + s).choice(train.n, 100, replace=False)]
        accepted += not defense_background_uniformity(logistic_model, Bn, None, train, seed=s).flagged

    wtrain, wtest = wide_split
    p = wtrain.protected_index
    f = train_model(ModelConfig("logistic"), wtrain)
    router = attack_scaffolding_ood(f, blind_model(wtrain), wtrain).payload
    filt = OODFilter(wtrain, cfg=OODFilterConfig(quantile=0.5))
    plain = ExplainerConfig(background=wtrain, n_perturbations=1000)
    filtered = ExplainerConfig(background=wtrain, n_perturbations=5000, sample_filter=filt)

    def protected(model, cfg):
        return global_aggregate([lime_tabular(model, x, cfg, i) for i, x in enumerate(wtest.X[:50])]).mean_abs[p]
    biased, recovered = protected(f, plain), protected(router, filtered)
    ratio = recovered / biased
    ok = wald.flagged and wald.statistic > 1.96 and accepted >= 45 and abs(ratio - 1) <= 0.25
    criterion(11, "OOD filter restores protected; Wald flags cherry-picked weights", ok,
              f"filtered {recovered:.4f} vs biased {biased:.4f} ({ratio:.2f}), |W| {wald.statistic:.2f}, "
              f"null accepted {accepted}/50")
    assert ok


def test_c12_metric_suite(criterion):
    t0 = time.perf_counter()
    checks = [
        spearman_rank_corr([1, 2, 3], [1, 2, 3]) == 1.0,
        spearman_rank_corr([1, 2, 3], [3, 2, 1]) == -1.0,
        spearman_rank_corr([1, 2, 3], [2, 1, 3]) == pytest.approx(0.5),
        kendall_tau_distance([1, 2, 3], [1, 2, 3]) == 0,
        kendall_tau_distance([1, 2, 3], [3, 2, 1]) == 3,
        kendall_tau_distance([1, 2, 3], [2, 1, 3]) == 1,
        kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0,
        kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(np.log(2)),
        wasserstein_1d([0.0, 1.0], [0.0, 1.0]) == 0.0,
        wasserstein_1d([0.0], [1.0]) == pytest.approx(1.0),
        wasserstein_1d([0.0, 2.0], [1.0], [0.5, 0.5]) == pytest.approx(1.0),
    ]
    net = FlowNetwork(2, 0, 1, 1)
    net.add_arc(0, 1, 1, 2.0)
    checks.append(min_cost_flow(net)[1] == 2.0)
    net = FlowNetwork(2, 0, 1, 2)
    net.add_arc(0, 1, 1, 1.0)
    net.add_arc(0, 1, 1, 3.0)
    checks.append(min_cost_flow(net)[1] == pytest.approx(4.0))
    examples_ok = all(checks)

    rng = np.random.default_rng(12)
    props = {"kendall": True, "wasserstein": True, "kl": True, "spearman": True, "mcf": True}
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        a, b, c = (list(rng.permutation(d)) for _ in range(3))
        props["kendall"] &= (kendall_tau_distance(a, b) == 0) == (a == b)
        props["kendall"] &= kendall_tau_distance(a, b) == kendall_tau_distance(b, a)
        props["kendall"] &= kendall_tau_distance(a, c) <= kendall_tau_distance(a, b) + kendall_tau_distance(b, c)

        u, v, w = (rng.normal(size=int(rng.integers(1, 7))) * 3 for _ in range(3))
        props["wasserstein"] &= wasserstein_1d(u, w) <= wasserstein_1d(u, v) + wasserstein_1d(v, w) + 1e-9
        props["wasserstein"] &= abs(wasserstein_1d(u, v) - wasserstein_1d(v, u)) <= 1e-12

        k = int(rng.integers(2, 6))
        pp, qq = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
        props["kl"] &= kl_divergence(pp, qq) >= 0 and kl_divergence(pp, pp) == pytest.approx(0.0, abs=1e-12)

        n = int(rng.integers(2, 8))
        ra, rb, perm = rng.permutation(n) + 1, rng.permutation(n) + 1, rng.permutation(n)
        props["spearman"] &= spearman_rank_corr(ra, rb) == pytest.approx(spearman_rank_corr(rb, ra))
        props["spearman"] &= spearman_rank_corr(ra[perm], rb[perm]) == pytest.approx(spearman_rank_corr(ra, rb))
    for _ in range(50):
        net = FlowNetwork(6, 0, 5, int(rng.integers(1, 3)))
        while len(net.arcs) < 8:
            t, h = rng.choice(6, 2, replace=False)
            net.add_arc(t, h, int(rng.integers(0, 3)), float(rng.integers(0, 10)))
        best = brute_force_flow(net)
        try:
            cost = min_cost_flow(net)[1]
        except ValueError:
            cost = np.inf
        props["mcf"] &= (cost == best) if np.isinf(best) else abs(cost - best) <= 1e-9
    elapsed = time.perf_counter() - t0
    ok = examples_ok and all(props.values()) and elapsed < 30
    criterion(12, "metric examples and 1000-case properties", ok,
              f"examples {examples_ok}, " + ", ".join(f"{k} {v}" for k, v in props.items()) + f", {elapsed:.1f}s")
    assert ok


def test_c13_determinism(criterion, tmp_path):
    smoke = Path(__file__).resolve().parents[1] / "configs" / "smoke.json"
    run_experiment(smoke, out_dir=tmp_path / "a")
    run_experiment(smoke, out_dir=tmp_path / "b")
    a, b = (tmp_path / "a" / "metrics.csv").read_bytes(), (tmp_path / "b" / "metrics.csv").read_bytes()
    ok = a == b and len(a) > 0
    criterion(13, "rerun with the same seed gives identical metrics.csv", ok,
              f"{len(a)} bytes, identical {a == b}")
    assert ok
