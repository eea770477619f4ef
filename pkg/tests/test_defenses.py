import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xai_attacks.defenses import (
    DefenseVerdict,
    OODFilter,
    OODFilterConfig,
    defense_adversarial_retraining,
    defense_background_uniformity,
    defense_multi_explainer,
    defense_ood_filter,
    gaussian_noise_rows,
    wald_statistic,
)
from xai_attacks.explainers import ExplainerConfig
from xai_attacks.models import LogisticModel, ModelConfig


# OOD filter

def test_reference_rows_never_flagged(biased_split):
    train, _ = biased_split
    filt = OODFilter(train, cfg=OODFilterConfig(quantile=1.0))
    assert not filt.flags(train.X).any()


def test_reference_row_kept_and_far_query_flagged(biased_split):
    train, _ = biased_split
    num = ~train.schema.is_categorical()
    far = train.X[0].copy()
    far[num] = train.X[:, num].mean(axis=0) + 10 * train.X[:, num].std(axis=0)
    kept, verdicts = defense_ood_filter(train, np.vstack([train.X[0], far]))
    assert [v.flagged for v in verdicts] == [False, True]
    np.testing.assert_array_equal(kept, train.X[:1])
    assert all(v.defense == "ood_filter" and v.threshold == 1.0 for v in verdicts)


def test_filter_is_callable_keep_mask(biased_split):
    train, test = biased_split
    filt = OODFilter(train)
    np.testing.assert_array_equal(filt(test.X), ~filt.flags(test.X))
    assert filt(test.X).mean() > 0.9


def test_single_reference_row():
    filt = OODFilter(np.array([[1.0, 2.0]]))
    assert filt.keep_mask(np.array([[1.0, 2.0]]))[0]
    assert filt.flags(np.array([[1.5, 2.0]]))[0]


def test_filter_rejects_bad_config():
    with pytest.raises(ValueError):
        OODFilter(np.zeros((3, 2)), cfg=OODFilterConfig(quantile=0.0))
    with pytest.raises(ValueError):
        OODFilter(np.zeros((0, 2)))


# multiple explainers

def test_multi_explainer_agrees_on_linear_model():
    # every feature one background std from the mean: SHAP w_j (x_j - mu_j) and
    # the local LIME slope w_j sigma_j share the same magnitude ordering
    rng = np.random.default_rng(0)
    B = rng.normal(size=(400, 4))
    B = (B - B.mean(axis=0)) / B.std(axis=0)
    m = LogisticModel(np.array([3.0, -2.0, 1.0, 0.4]), 0.1)
    cfg = ExplainerConfig(background=B, n_perturbations=2000, output="margin", seed=3)
    for x in (np.array([1.0, 1.0, -1.0, 1.0]), np.array([-1.0, 1.0, 1.0, -1.0])):
        v = defense_multi_explainer(m, x, cfg)
        assert v.statistic >= 0.9 and not v.flagged
        assert v.direction == "below"


def test_multi_explainer_on_trained_model_is_in_range(logistic_model, biased_split):
    train, test = biased_split
    cfg = ExplainerConfig(background=train.X[:100], n_perturbations=500, seed=3)
    v = defense_multi_explainer(logistic_model, test.X[0], cfg)
    assert -1 <= v.statistic <= 1 and v.flagged == (v.statistic < 0.5)


def test_multi_explainer_single_feature():
    m = LogisticModel(np.array([2.0]), 0.0)
    cfg = ExplainerConfig(background=np.linspace(-1, 1, 20)[:, None], n_perturbations=200)
    assert defense_multi_explainer(m, np.array([0.5]), cfg).statistic == 1.0


def test_multi_explainer_zero_attributions():
    m = LogisticModel(np.zeros(3), 0.0)
    cfg = ExplainerConfig(background=np.random.default_rng(0).normal(size=(20, 3)), n_perturbations=200)
    v = defense_multi_explainer(m, np.ones(3), cfg)
    assert np.isfinite(v.statistic)
    assert "all-zero" in v.details


def test_multi_explainer_needs_two_methods(logistic_model):
    with pytest.raises(ValueError):
        defense_multi_explainer(logistic_model, np.zeros(6), ExplainerConfig(), methods=("lime",))


# background uniformity

def test_wald_identical_samples_zero():
    a = np.array([0.1, 0.4, 0.7, 0.2])
    assert wald_statistic(a, a.copy()) == 0.0


def test_wald_constant_samples():
    assert wald_statistic(np.ones(4), np.ones(5)) == 0.0
    assert wald_statistic(np.ones(4), np.zeros(5)) == np.inf


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=20), st.lists(st.floats(-5, 5), min_size=3, max_size=20))
def test_wald_antisymmetric(a, b):
    w1, w2 = wald_statistic(a, b), wald_statistic(b, a)
    if np.isfinite(w1):
        assert w1 == pytest.approx(-w2, abs=1e-9)


def test_wald_unit_weights_match_unweighted(rng):
    a, b = rng.normal(size=30), rng.normal(size=40)
    assert wald_statistic(a, b, np.full(30, 2)) == pytest.approx(wald_statistic(a, b))


def test_uniformity_flags_extreme_weights(logistic_model, biased_split):
    train, _ = biased_split
    B = train.X[:100]
    s = logistic_model.predict_scores(B)
    w = np.zeros(100, dtype=int)
    w[np.argsort(s)[:10]] = 10
    v = defense_background_uniformity(logistic_model, B, w, train)
    assert v.flagged and v.statistic > 1.96


def test_uniformity_null_acceptance(logistic_model, biased_split):
    train, _ = biased_split
    accepted = 0
    for s in range(50):
        B = train.X[np.random.default_rng(1000 + s).choice(train.n, 100)]
        accepted += not defense_background_uniformity(logistic_model, B, None, train, seed=s).flagged
    assert accepted >= 45


def test_uniformity_small_reference(logistic_model):
    with pytest.raises(ValueError, match="at least 10"):
        defense_background_uniformity(logistic_model, np.zeros((5, 6)), None, np.zeros((3, 6)))


# adversarial retraining

def test_retraining_without_adversarial_rows_is_identical(biased_split):
    train, _ = biased_split
    cfg = ModelConfig("logistic")
    a = defense_adversarial_retraining(cfg, train, np.empty((0, train.d)))
    b = defense_adversarial_retraining(cfg, train, [])
    np.testing.assert_array_equal(a.weights, b.weights)
    assert a.intercept == b.intercept
    assert a.retraining_report.n_adversarial == 0


def test_retraining_on_gaussian_noise(logistic_model, biased_split):
    train, test = biased_split
    A, yA = gaussian_noise_rows(train, copies=1, std=0.1)
    m = defense_adversarial_retraining(ModelConfig("logistic"), train, A, yA, probes=test.X[:10],
                                       baseline=logistic_model)
    acc0 = np.mean(logistic_model.predict_labels(test.X) == test.y)
    acc1 = np.mean(m.predict_labels(test.X) == test.y)
    assert abs(acc0 - acc1) <= 0.03
    assert m.retraining_report.stability >= 0.8
    assert len(m.retraining_report.per_probe) == 10


def test_retraining_input_errors(biased_split):
    train, _ = biased_split
    with pytest.raises(ValueError, match="labels"):
        defense_adversarial_retraining(ModelConfig("logistic"), train, train.X[:2])
    with pytest.raises(ValueError, match="columns"):
        defense_adversarial_retraining(ModelConfig("logistic"), train, np.zeros((2, 3)), [0, 1])


def test_noise_rows_keep_categoricals(biased_split):
    train, _ = biased_split
    A, yA = gaussian_noise_rows(train, copies=2)
    cat = train.schema.is_categorical()
    assert A.shape == (2 * train.n, train.d)
    np.testing.assert_array_equal(A[: train.n, cat], train.X[:, cat])
    np.testing.assert_array_equal(yA[: train.n], train.y)


# verdicts

@given(st.floats(-10, 10), st.floats(-10, 10), st.sampled_from(["above", "below"]))
def test_verdict_consistency(stat, thr, direction):
    flagged = stat > thr if direction == "above" else stat < thr
    v = DefenseVerdict("ood_filter", stat, thr, flagged, direction=direction)
    assert v.to_dict()["flagged"] == flagged
    with pytest.raises(ValueError):
        DefenseVerdict("ood_filter", stat, thr, not flagged, direction=direction)


def test_verdict_unknown_defense():
    with pytest.raises(ValueError):
        DefenseVerdict("firewall", 0.0, 1.0, False)
