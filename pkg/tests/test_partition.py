import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_min_balanced_cut
from splitqp.instances import WeightedGraph, generate_blob_graph, maxcut_to_qubo
from splitqp.partition import (InteractionGraph, Partition, PartitionError, build_graph, cut_weight, kmeans,
                               partition_greedy, partition_spectral)
from splitqp.qp import QuadraticProgram


def two_cliques(size):
    edges = []
    for off in (0, size):
        for a in range(size):
            for b in range(a + 1, size):
                edges.append((off + a, off + b, 1.0))
    edges.append((size - 1, size, 1.0))
    return 2 * size, edges


def random_graph(rng, n, p):
    edges = [(i, j, float(rng.integers(1, 4))) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return InteractionGraph.from_edges(n, edges)


def assert_exact_partition(p, n, k):
    assert p.k == k
    allm = np.concatenate(p.members)
    assert sorted(allm.tolist()) == list(range(n))
    assert all(len(m) > 0 for m in p.members)
    for idx, m in enumerate(p.members):
        assert np.all(np.diff(m) > 0)
        assert np.all(p.assignment[m] == idx)


def test_build_graph_examples():
    g = build_graph(QuadraticProgram(2, {(0, 1): -3.0}))
    assert g.neighbors(0) == [(1, 3.0)]
    assert g.neighbors(1) == [(0, 3.0)]
    g = build_graph(QuadraticProgram(5, {}))
    assert g.node_count == 5 and g.total_weight == 0
    tri = maxcut_to_qubo(WeightedGraph.from_edges(3, [(0, 1, 1), (0, 2, 1), (1, 2, 1)]))
    g = build_graph(tri)
    assert sorted(g.neighbors(0)) == [(1, 2.0), (2, 2.0)]
    assert g.total_weight == 6.0


def test_graph_symmetric_no_loops():
    rng = np.random.default_rng(0)
    g = random_graph(rng, 30, 0.2)
    for i in range(30):
        for j, w in g.neighbors(i):
            assert j != i
            assert (i, w) in g.neighbors(j)


def test_spectral_k1():
    g = random_graph(np.random.default_rng(1), 20, 0.3)
    p = partition_spectral(g, 1, seed=0)
    assert p.k == 1 and p.sizes == [20]


@pytest.mark.parametrize("size", range(3, 9))
def test_spectral_two_cliques_minimum_cut(size):
    n, edges = two_cliques(size)
    g = InteractionGraph.from_edges(n, edges)
    p = partition_spectral(g, 2, seed=0)
    assert cut_weight(g, p) == brute_min_balanced_cut(n, edges) == 1.0
    assert sorted(map(tuple, (m.tolist() for m in p.members))) == [tuple(range(size)), tuple(range(size, n))]


def test_spectral_recovers_three_blobs():
    wg = generate_blob_graph(90, 3, 1.0, 1.0, seed=0)
    g = build_graph(maxcut_to_qubo(wg))
    p = partition_spectral(g, 3, seed=0)
    assert cut_weight(g, p) <= 0.01 * g.total_weight
    blob = np.repeat(np.arange(3), 30)
    # isolated points carry no structure and go to the smallest cluster
    linked = g.degrees > 0
    for m in p.members:
        assert len(set(blob[m[linked[m]]].tolist())) == 1


def test_spectral_errors():
    g = random_graph(np.random.default_rng(2), 10, 0.3)
    with pytest.raises(PartitionError):
        partition_spectral(g, 0)
    with pytest.raises(PartitionError):
        partition_spectral(g, 11)
    with pytest.raises(PartitionError):
        partition_spectral(g, 2, dense_limit=5)


def test_spectral_isolated_nodes():
    g = InteractionGraph.from_edges(6, [(0, 1, 1.0), (2, 3, 1.0)])
    p = partition_spectral(g, 3, seed=0)
    assert_exact_partition(p, 6, 3)
    p = partition_spectral(InteractionGraph.from_edges(4, []), 4, seed=0)
    assert_exact_partition(p, 4, 4)


def test_spectral_deterministic():
    g = random_graph(np.random.default_rng(3), 60, 0.08)
    a = partition_spectral(g, 4, seed=7)
    b = partition_spectral(g, 4, seed=7)
    assert a == b


def test_greedy_singletons():
    g = random_graph(np.random.default_rng(4), 12, 0.3)
    p = partition_greedy(g, 12, seed=0)
    assert p.sizes == [1] * 12
    assert cut_weight(g, p) == g.total_weight


def test_greedy_components():
    comps, size = 4, 6
    edges = []
    for c in range(comps):
        for a in range(size - 1):
            edges.append((c * size + a, c * size + a + 1, 1.0))
        edges.append((c * size, c * size + size - 1, 1.0))
    g = InteractionGraph.from_edges(comps * size, edges)
    p = partition_greedy(g, comps, seed=0)
    assert cut_weight(g, p) == 0.0


def test_greedy_path():
    edges = [(i, i + 1, 1.0) for i in range(9)]
    g = InteractionGraph.from_edges(10, edges)
    p = partition_greedy(g, 2, seed=0)
    assert cut_weight(g, p) == brute_min_balanced_cut(10, edges) == 1.0


def test_greedy_balance_on_connected_graph():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(40, 120))
        k = int(rng.integers(2, 8))
        # ring plus random chords keeps it connected
        edges = {(i, (i + 1) % n) if i < (i + 1) % n else ((i + 1) % n, i) for i in range(n)}
        for _ in range(n):
            a, b = sorted(rng.choice(n, 2, replace=False).tolist())
            edges.add((a, b))
        g = InteractionGraph.from_edges(n, [(a, b, 1.0) for a, b in edges])
        p = partition_greedy(g, k, seed=1)
        assert_exact_partition(p, n, k)
        for s in p.sizes:
            assert n / k / 2 <= s <= 2 * n / k


def test_greedy_errors_and_determinism():
    g = random_graph(np.random.default_rng(6), 30, 0.1)
    with pytest.raises(PartitionError):
        partition_greedy(g, 0)
    with pytest.raises(PartitionError):
        partition_greedy(g, 31)
    assert partition_greedy(g, 5, seed=3) == partition_greedy(g, 5, seed=3)


def test_cut_weight_examples():
    n, edges = two_cliques(4)
    g = InteractionGraph.from_edges(n, edges)
    assert cut_weight(g, Partition.from_labels(np.zeros(n, dtype=int))) == 0
    assert cut_weight(g, Partition.from_labels([0] * 4 + [1] * 4)) == 1.0
    assert cut_weight(g, Partition.from_labels(np.arange(n))) == g.total_weight


def test_partition_json_and_validation():
    p = Partition.from_labels([1, 0, 1, 2])
    assert Partition.from_json(p.to_json()) == p
    assert [m.tolist() for m in p.members] == [[1], [0, 2], [3]]
    with pytest.raises(PartitionError):
        Partition.from_labels([0, 2, 2])
    with pytest.raises(PartitionError):
        Partition.from_labels([0, 1], k=3)


def test_kmeans_separated_clusters():
    rng = np.random.default_rng(7)
    pts = np.vstack([rng.normal(c, 0.1, size=(20, 2)) for c in ((0, 0), (5, 5), (0, 5))])
    labels, _ = kmeans(pts, 3, seed=0)
    for b in range(3):
        assert len(set(labels[b * 20:(b + 1) * 20].tolist())) == 1
    assert len(set(labels.tolist())) == 3


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.floats(0.0, 0.5), st.integers(0, 1000), st.data())
def test_partitioners_always_exact(n, density, seed, data):
    g = random_graph(np.random.default_rng(seed), n, density)
    k = data.draw(st.integers(1, n))
    assert_exact_partition(partition_spectral(g, k, seed=seed), n, k)
    assert_exact_partition(partition_greedy(g, k, seed=seed), n, k)
