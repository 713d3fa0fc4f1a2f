from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sharecascade.coverage import (
    MAX_DENSE_K,
    EdgeDistribution,
    NotCoverageError,
    SubsetFunction,
    canonical_index,
    canonical_subset,
    check_coverage_conditions,
    complement_derivatives,
    discrete_derivative,
    discrete_derivative_recursive,
    edge_distribution,
    exact_final_distribution,
    incidence_matrix,
    inverse_incidence,
    reachable,
    reachable_masks,
    sample_graph,
    sample_in_masks,
)


def test_canonical_order_small():
    assert [canonical_subset(2, i) for i in range(3)] == [{1}, {2}, {1, 2}]
    assert [sorted(canonical_subset(3, i)) for i in range(7)] == [
        [1], [2], [1, 2], [3], [1, 3], [2, 3], [1, 2, 3]]


@pytest.mark.parametrize("k", range(1, 7))
def test_canonical_roundtrip(k):
    seen = set()
    for pos in range((1 << k) - 1):
        S = canonical_subset(k, pos)
        assert canonical_index(k, S) == pos
        seen.add(S)
    assert len(seen) == (1 << k) - 1


def test_canonical_index_rejects_bad_subsets():
    with pytest.raises(ValueError):
        canonical_index(2, [])
    with pytest.raises(ValueError):
        canonical_index(2, [3])


def test_incidence_k2_frozen():
    assert incidence_matrix(2).tolist() == [[1, 0, 1], [0, 1, 1], [1, 1, 1]]
    assert inverse_incidence(2).tolist() == [[0, -1, 1], [-1, 0, 1], [1, 1, -1]]


@pytest.mark.parametrize("k", range(1, 8))
def test_inverse_and_row_sums(k):
    A, B = incidence_matrix(k), inverse_incidence(k)
    assert (A @ B == np.eye(len(A))).all()
    sums = B.sum(axis=1)
    assert (sums[:-1] == 0).all() and sums[-1] == 1


def test_dense_cap():
    with pytest.raises(OverflowError):
        incidence_matrix(MAX_DENSE_K + 1)


def test_derivative_examples():
    size = SubsetFunction.from_callable((1, 2), len)
    assert discrete_derivative(size, 0b11, 0) == 0
    orf = SubsetFunction.from_callable((1, 2), lambda S: float(bool(S)))
    assert discrete_derivative(orf, 0b11, 0) == -1
    assert discrete_derivative(orf, 0, 0b01) == orf({1})


@settings(max_examples=50, deadline=None)
@given(k=st.integers(0, 5), seed=st.integers(0, 2**32 - 1))
def test_derivative_forms_agree(k, seed):
    f = SubsetFunction(tuple(range(k)), np.random.default_rng(seed).normal(size=1 << k))
    D = complement_derivatives(f)
    for T in range(1 << k):
        assert D[T] == pytest.approx(discrete_derivative(f, T, f.full ^ T), abs=1e-12)
        for W in range(1 << k):
            assert discrete_derivative(f, T, W) == pytest.approx(discrete_derivative_recursive(f, T, W), abs=1e-12)


def test_spontaneous_violation():
    f = SubsetFunction((1,), np.array([0.1, 0.5]))
    rep = check_coverage_conditions(f)
    assert not rep.passed and rep.violations[0][2] == "spontaneous"
    assert rep.signs_ok


def _independent_union(p):
    """P(some member of S fires), each independently: a coverage function."""
    return SubsetFunction.from_callable(range(len(p)), lambda S: 1 - np.prod([1 - p[i] for i in S]))


def test_known_coverage_function_passes_and_recovers_edges():
    p = [0.2, 0.5, 0.7]
    f = _independent_union(p)
    assert check_coverage_conditions(f).passed
    q = edge_distribution(f).q
    for m in range(8):
        expect = np.prod([p[i] if m >> i & 1 else 1 - p[i] for i in range(3)])
        assert q[m] == pytest.approx(expect, abs=1e-12)


def test_supermodular_function_fails():
    # activation only when both neighbours share: odd derivative of {1} at {2} complement fails
    f = SubsetFunction((1, 2), np.array([0.0, 0.0, 0.0, 1.0]))
    rep = check_coverage_conditions(f)
    assert not rep.passed
    assert {v[2] for v in rep.violations} <= {"odd-negative", "even-positive", "empty-negative"}
    with pytest.raises(NotCoverageError):
        edge_distribution(f)


def test_edge_distribution_examples():
    q = edge_distribution(SubsetFunction((1,), np.array([0.0, 0.5]))).q
    assert q.tolist() == [0.5, 0.5]
    f = SubsetFunction((1, 2), np.array([0.0, 0.5, 0.5, 0.75]))
    assert edge_distribution(f).q.tolist() == [0.25, 0.25, 0.25, 0.25]


def test_clamping():
    f = SubsetFunction((1, 2), np.array([0.0, 0.5, 0.5, 0.75 + 1e-11]))
    q = edge_distribution(f).q
    assert (q >= 0).all()


def test_empty_universe():
    assert edge_distribution(SubsetFunction((), np.array([0.0]))).q.tolist() == [1.0]


def test_global_masks_and_support():
    dist = EdgeDistribution((2, 5), np.array([0.25, 0.25, 0.0, 0.5]))
    assert dist.global_masks().tolist() == [0, 4, 32, 36]
    assert dist.support() == [(0, 0.25), (4, 0.25), (36, 0.5)]


def test_reachability_examples():
    assert reachable([frozenset({1}), frozenset({0})], []) == frozenset()
    assert reachable([frozenset({1}), frozenset({0}), frozenset()], [0]) == {0, 1}
    assert reachable([frozenset(), frozenset({0}), frozenset({1})], [0]) == {0, 1, 2}


def test_exact_distribution_point_masses():
    none = EdgeDistribution((1, 2), np.array([1.0, 0, 0, 0]))
    dists = [EdgeDistribution((0, 2), np.array([1.0, 0, 0, 0])), none,
             EdgeDistribution((0, 1), np.array([1.0, 0, 0, 0]))]
    assert exact_final_distribution(dists, [0, 2]) == {frozenset({0, 2}): 1.0}
    assert exact_final_distribution([None], []) == {frozenset(): 1.0}


def test_exact_distribution_chain():
    # 0 -> 1 with prob 0.5, 1 -> 2 with prob 0.4
    dists = [None, EdgeDistribution((0,), np.array([0.5, 0.5])), EdgeDistribution((1,), np.array([0.6, 0.4]))]
    got = exact_final_distribution(dists, [0])
    assert got == pytest.approx({frozenset({0}): 0.5, frozenset({0, 1}): 0.3, frozenset({0, 1, 2}): 0.2})


def test_exact_distribution_cap():
    d = EdgeDistribution((0,), np.array([0.5, 0.5]))
    with pytest.raises(OverflowError):
        exact_final_distribution([d] * 8, [0], cap=100)


def _random_dists(n, rng):
    dists = []
    for u in range(n):
        others = tuple(x for x in range(n) if x != u)
        q = rng.random(1 << len(others)) * (rng.random(1 << len(others)) < 0.5)
        q[0] += 0.1
        dists.append(EdgeDistribution(others, q / q.sum()))
    return dists


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6))
def test_vector_reachability_matches_bfs(seed, n):
    rng = np.random.default_rng(seed)
    dists = _random_dists(n, rng)
    S = [int(x) for x in np.flatnonzero(rng.random(n) < 0.4)]
    seed_mask = sum(1 << s for s in S)
    masks = sample_in_masks(dists, 20, rng)
    reached = reachable_masks(masks, seed_mask)
    for r in range(20):
        graph = [frozenset(i for i in range(n) if masks[r, u] >> i & 1) for u in range(n)]
        assert reachable(graph, S) == frozenset(i for i in range(n) if reached[r] >> i & 1)


def test_sampling_matches_exact():
    rng = np.random.default_rng(11)
    dists = _random_dists(4, rng)
    exact = exact_final_distribution(dists, [0])
    assert sum(exact.values()) == pytest.approx(1.0)
    N = 40_000
    reached = reachable_masks(sample_in_masks(dists, N, rng), 1)
    vals, counts = np.unique(reached, return_counts=True)
    emp = {frozenset(i for i in range(4) if v >> i & 1): c / N for v, c in zip(vals, counts)}
    tv = 0.5 * sum(abs(emp.get(k, 0) - exact.get(k, 0)) for k in set(emp) | set(exact))
    assert tv < 0.02


def test_sample_graph_respects_support():
    rng = np.random.default_rng(0)
    d = EdgeDistribution((1, 2), np.array([0.0, 0.0, 0.0, 1.0]))
    for _ in range(10):
        g = sample_graph([d, None, None], rng)
        assert g == [frozenset({1, 2}), frozenset(), frozenset()]


@pytest.mark.parametrize("k", [1, 2, 3])
def test_subset_function_indexing(k):
    f = SubsetFunction.from_callable(tuple("abc"[:k]), lambda S: float(len(S)))
    for r in range(k + 1):
        for S in itertools.combinations("abc"[:k], r):
            assert f(S) == r
    with pytest.raises(ValueError):
        SubsetFunction((1, 2), np.zeros(3))
