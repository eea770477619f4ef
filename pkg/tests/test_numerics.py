import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats as sps

from xai_attacks.numerics import (
    FlowNetwork,
    InfeasibleFlowError,
    SingularSystemError,
    derive_seed,
    finite_diff_gradient,
    importance_order,
    importance_ranks,
    kendall_tau_distance,
    kl_divergence,
    make_rng,
    min_cost_flow,
    spearman_rank_corr,
    wasserstein_1d,
    wasserstein_per_feature,
    weighted_ridge,
)

from oracles import brute_force_flow


def random_network(rng, n_nodes=6, n_arcs=8, max_cap=2):
    net = FlowNetwork(n_nodes, 0, n_nodes - 1, int(rng.integers(1, 3)))
    while len(net.arcs) < n_arcs:
        t, h = rng.choice(n_nodes, 2, replace=False)
        net.add_arc(t, h, int(rng.integers(0, max_cap + 1)), float(rng.integers(0, 10)))
    return net


# rank statistics

def test_spearman_examples():
    assert spearman_rank_corr([1, 2, 3], [1, 2, 3]) == 1.0
    assert spearman_rank_corr([1, 2, 3], [3, 2, 1]) == -1.0
    assert spearman_rank_corr([1, 2, 3], [2, 1, 3]) == pytest.approx(0.5)


def test_spearman_rejects_bad_input():
    with pytest.raises(ValueError):
        spearman_rank_corr([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        spearman_rank_corr([1], [1])


@given(st.permutations(list(range(1, 8))), st.permutations(list(range(1, 8))))
def test_spearman_tie_free_matches_scipy(a, b):
    assert spearman_rank_corr(a, b) == pytest.approx(sps.spearmanr(a, b).statistic, abs=1e-12)


@given(arrays(float, 6, elements=st.integers(0, 3).map(float)), arrays(float, 6, elements=st.floats(-5, 5)))
def test_spearman_with_ties_matches_scipy(a, b):
    if len(np.unique(a)) < 2 or len(np.unique(b)) < 2:
        return
    assert spearman_rank_corr(a, b) == pytest.approx(sps.spearmanr(a, b).statistic, abs=1e-9)


@given(st.permutations(list(range(1, 7))), st.permutations(list(range(1, 7))), st.permutations(list(range(6))))
def test_spearman_symmetric_and_permutation_invariant(a, b, perm):
    a, b, perm = np.array(a), np.array(b), np.array(perm)
    assert spearman_rank_corr(a, b) == pytest.approx(spearman_rank_corr(b, a))
    assert spearman_rank_corr(a[perm], b[perm]) == pytest.approx(spearman_rank_corr(a, b))


def test_kendall_examples():
    assert kendall_tau_distance([1, 2, 3], [1, 2, 3]) == 0
    assert kendall_tau_distance([1, 2, 3], [3, 2, 1]) == 3
    assert kendall_tau_distance([1, 2, 3], [2, 1, 3]) == 1
    with pytest.raises(ValueError):
        kendall_tau_distance([1, 2, 3], [1, 2, 4])


@given(st.integers(1, 6).flatmap(lambda d: st.tuples(*[st.permutations(list(range(d)))] * 3)))
def test_kendall_is_a_metric(triple):
    a, b, c = triple
    assert (kendall_tau_distance(a, b) == 0) == (list(a) == list(b))
    assert kendall_tau_distance(a, b) == kendall_tau_distance(b, a)
    assert kendall_tau_distance(a, c) <= kendall_tau_distance(a, b) + kendall_tau_distance(b, c)


def test_importance_ranks_tie_break_by_index():
    assert list(importance_ranks([0.5, -2.0, 0.5, 0.0])) == [2, 1, 3, 4]
    assert list(importance_order([0.5, -2.0, 0.5, 0.0])) == [1, 0, 2, 3]


@given(arrays(float, st.integers(1, 9), elements=st.floats(-10, 10)))
def test_importance_ranks_is_permutation(v):
    r = importance_ranks(v)
    assert sorted(r) == list(range(1, len(v) + 1))
    order = importance_order(v)
    assert np.all(np.diff(np.abs(v)[order]) <= 0)


# divergences and transport

def test_kl_examples():
    assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))
    with pytest.raises(ValueError):
        kl_divergence([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(ValueError):
        kl_divergence([1.5, -0.5], [0.5, 0.5])


simplex = st.integers(2, 6).flatmap(
    lambda d: st.tuples(*[arrays(float, d, elements=st.floats(0.01, 1.0))] * 2)
)


@given(simplex)
def test_kl_nonnegative_and_zero_iff_equal(pq):
    p, q = (v / v.sum() for v in pq)
    kl = kl_divergence(p, q)
    assert kl >= -1e-12
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)
    if np.max(np.abs(p - q)) > 1e-3:
        assert kl > 0


def test_wasserstein_examples():
    assert wasserstein_1d([0.0, 1.0, 2.0], [0.0, 1.0, 2.0]) == 0.0
    assert wasserstein_1d([0.0], [1.0]) == pytest.approx(1.0)
    assert wasserstein_1d([0.0, 2.0], [1.0], [0.5, 0.5]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        wasserstein_1d([], [1.0])


samples = arrays(float, st.integers(1, 6), elements=st.floats(-10, 10))


@given(samples, samples, samples)
def test_wasserstein_triangle_inequality_and_scipy(a, b, c):
    ab, bc, ac = wasserstein_1d(a, b), wasserstein_1d(b, c), wasserstein_1d(a, c)
    assert ac <= ab + bc + 1e-9
    assert ab == pytest.approx(wasserstein_1d(b, a))
    assert ab == pytest.approx(sps.wasserstein_distance(a, b), abs=1e-9)


def test_wasserstein_per_feature_sums_columns():
    A = np.array([[0.0, 1.0], [2.0, 3.0]])
    B = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert wasserstein_per_feature(A, B) == pytest.approx(1.0 + 1.0)


# least squares and differences

def test_weighted_ridge_recovers_exact_linear_data(rng):
    X = rng.normal(size=(30, 3))
    beta = np.array([1.5, -2.0, 0.25])
    y = X @ beta + 0.7
    b, b0 = weighted_ridge(X, y, None, 0.0)
    np.testing.assert_allclose(b, beta, atol=1e-8)
    assert b0 == pytest.approx(0.7, abs=1e-8)


def test_weighted_ridge_large_lambda_shrinks_to_zero(rng):
    X = rng.normal(size=(30, 3))
    y = X @ np.array([1.0, 2.0, 3.0])
    b, _ = weighted_ridge(X, y, None, 1e12)
    assert np.max(np.abs(b)) < 1e-8


def test_weighted_ridge_duplicated_row_identity(rng):
    X = rng.normal(size=(8, 2))
    y = rng.normal(size=8)
    w = np.ones(8)
    w[0] = 2.0
    b1 = weighted_ridge(np.vstack([X, X[:1]]), np.append(y, y[0]), np.append(w, 1.0), 0.5)
    w3 = np.ones(8)
    b2 = weighted_ridge(np.vstack([X, X[:1], X[:1]]), np.append(y, [y[0], y[0]]), np.append(w3, [1.0, 1.0]), 0.5)
    np.testing.assert_allclose(b1[0], b2[0], atol=1e-10)
    np.testing.assert_allclose(b1[1], b2[1], atol=1e-10)


def test_weighted_ridge_singular_system():
    X = np.ones((5, 2))
    with pytest.raises(SingularSystemError, match="lam > 0"):
        weighted_ridge(X, np.arange(5.0), None, 0.0)


def test_finite_diff_examples():
    assert finite_diff_gradient(lambda v: v[0] ** 2, np.array([3.0]))[0] == pytest.approx(6.0, abs=1e-6)
    np.testing.assert_array_equal(finite_diff_gradient(lambda v: 4.0, np.zeros(3)), np.zeros(3))
    w = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(finite_diff_gradient(lambda v: w @ v, np.ones(3)), w, atol=1e-9)
    with pytest.raises(ValueError):
        finite_diff_gradient(lambda v: np.inf, np.zeros(1))


# min-cost flow

def test_mcf_single_arc():
    net = FlowNetwork(2, 0, 1, 1)
    net.add_arc(0, 1, 1, 2.0)
    flows, cost = min_cost_flow(net)
    assert cost == 2.0 and flows == [1]


def test_mcf_parallel_arcs():
    net = FlowNetwork(2, 0, 1, 2)
    net.add_arc(0, 1, 1, 1.0)
    net.add_arc(0, 1, 1, 3.0)
    assert min_cost_flow(net)[1] == pytest.approx(4.0)


def test_mcf_infeasible():
    net = FlowNetwork(3, 0, 2, 2)
    net.add_arc(0, 1, 5, 1.0)
    net.add_arc(1, 2, 1, 1.0)
    with pytest.raises(InfeasibleFlowError):
        min_cost_flow(net)


def test_mcf_rejects_self_loop():
    net = FlowNetwork(2, 0, 1, 1)
    net.add_arc(1, 1, 1, 0.0)
    with pytest.raises(ValueError, match="self-loop"):
        min_cost_flow(net)


def test_mcf_matches_brute_force_on_random_networks():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 60:
        net = random_network(rng)
        best = brute_force_flow(net)
        if math.isinf(best):
            with pytest.raises(InfeasibleFlowError):
                min_cost_flow(net)
            continue
        flows, cost = min_cost_flow(net)
        assert cost == pytest.approx(best, abs=1e-9)
        assert all(0 <= f <= cap for f, (_, _, cap, _) in zip(flows, net.arcs))
        checked += 1


# rng

def test_named_streams_are_reproducible_and_distinct():
    a = make_rng(3, "model", "mlp").normal(size=4)
    b = make_rng(3, "model", "mlp").normal(size=4)
    c = make_rng(3, "model", "gbt").normal(size=4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert derive_seed(3, "x") == derive_seed(3, "x") != derive_seed(4, "x")
