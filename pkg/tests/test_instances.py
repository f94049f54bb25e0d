import json

import numpy as np
import pytest

from oracles import brute_force, direct_cut
from splitqp.instances import (AppInstance, GsetParseError, WeightedGraph, app_to_qubo, cut_value, generate_app,
                               generate_blob_graph, maxcut_to_qubo, parse_gset, read_gset, scale_radius)
from splitqp.partition import build_graph, cut_weight, partition_spectral
from splitqp.qp import DimensionError, QuadraticProgram, check_feasibility, dumps, evaluate_cost


def random_graph(rng, n, p=0.3, signed=True):
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                w = int(rng.choice([-1, 1])) if signed else int(rng.integers(1, 5))
                edges.append((i, j, w))
    return WeightedGraph.from_edges(n, edges)


def test_blob_threshold_limits():
    assert generate_blob_graph(30, 3, 1.0, 1e-9, seed=0).edge_count == 0
    g = generate_blob_graph(30, 3, 1.0, np.inf, seed=0)
    assert g.edge_count == 30 * 29 // 2
    assert np.all(g.i < g.j) and np.all(g.w == 1)


def test_blob_even_split_and_determinism():
    from splitqp.instances import blob_points
    pts = blob_points(10, 3, 1.0, seed=4)
    assert pts.shape == (10, 2)
    a = generate_blob_graph(50, 4, 1.0, 1.2, seed=9)
    b = generate_blob_graph(50, 4, 1.0, 1.2, seed=9)
    assert a.edges == b.edges
    with pytest.raises(ValueError):
        generate_blob_graph(2, 3, 1.0, 1.0, seed=0)
    with pytest.raises(ValueError):
        generate_blob_graph(10, 2, 0.0, 1.0, seed=0)


def test_blob_centres_on_circle():
    from splitqp.instances import blob_points
    pts = blob_points(3000, 3, 0.5, seed=1)
    counts = [1000, 1000, 1000]
    centres = [pts[sum(counts[:b]):sum(counts[:b + 1])].mean(axis=0) for b in range(3)]
    for c in centres:
        assert np.linalg.norm(c) == pytest.approx(5.0, abs=0.1)


def test_three_blobs_cluster_recovery():
    g = generate_blob_graph(90, 3, 1.0, 1.0, seed=2)
    ig = build_graph(maxcut_to_qubo(g))
    p = partition_spectral(ig, 3, seed=0)
    assert cut_weight(ig, p) < 0.05 * ig.total_weight


def test_maxcut_mapping_examples():
    one = maxcut_to_qubo(WeightedGraph.from_edges(2, [(0, 1, 1)]))
    assert evaluate_cost(one, [0, 1]) == -1 and evaluate_cost(one, [0, 0]) == 0
    tri = maxcut_to_qubo(WeightedGraph.from_edges(3, [(0, 1, 1), (0, 2, 1), (1, 2, 1)]))
    assert brute_force(tri)[0] == -2
    assert tri.quadratic == {(0, 1): 2.0, (0, 2): 2.0, (1, 2): 2.0}
    assert tri.linear.tolist() == [-2.0, -2.0, -2.0]


def test_maxcut_mapping_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 25))
        g = random_graph(rng, n, rng.random(), signed=bool(rng.random() < 0.5))
        x = rng.integers(0, 2, n)
        assert evaluate_cost(maxcut_to_qubo(g), x) == -direct_cut(n, g.edges, x)
        assert cut_value(g, x) == direct_cut(n, g.edges, x)


def test_cut_value_examples():
    g = random_graph(np.random.default_rng(1), 8)
    assert cut_value(g, np.zeros(8, dtype=int)) == 0 == cut_value(g, np.ones(8, dtype=int))
    assert cut_value(WeightedGraph.from_edges(2, [(0, 1, -1)]), [0, 1]) == -1
    with pytest.raises(DimensionError):
        cut_value(g, [0, 1])


def test_parse_gset_examples(tmp_path):
    g = parse_gset("3 2\n1 2 1\n2 3 -1\n")
    assert g.node_count == 3 and g.edges == [(0, 1, 1.0), (1, 2, -1.0)]
    g = parse_gset("3 2  \n\n1 2 1   \n2 3 -1\n\n")
    assert g.edge_count == 2
    path = tmp_path / "g.txt"
    path.write_text("4 1\n4 1 1\n")
    assert read_gset(path).edges == [(0, 3, 1.0)]


@pytest.mark.parametrize("text,line", [
    ("3 1\n1 1 1\n", 2),
    ("3 1\n1 4 1\n", 2),
    ("3 2\n1 2 1\n2 1 1\n", 3),
    ("3 1\n1 2\n", 2),
    ("3 1\n1 x 1\n", 2),
    ("3\n", 1),
    ("3 2\n1 2 1\n", 2),
    ("", 1),
])
def test_parse_gset_errors(text, line):
    with pytest.raises(GsetParseError) as e:
        parse_gset(text)
    assert e.value.line_no == line


def test_app_examples():
    inst = generate_app(5, 100, 2, 1e-9, seed=0)
    assert inst.coverage.tolist() == [0] * 5 and inst.overlap == {}
    one = AppInstance(np.array([[0.0, 0.0], [2.0, 0.0], [50.0, 50.0]]), np.array([[1.0, 0.0]]), 1.5, 1)
    assert one.coverage.tolist() == [1, 1, 0]
    assert one.overlap == {(0, 1): 1}


def test_app_overlap_bound():
    rng = np.random.default_rng(2)
    for t in range(1000):
        n = int(rng.integers(1, 12))
        inst = generate_app(n, int(rng.integers(0, 60)), int(rng.integers(0, n + 1)),
                            float(rng.uniform(1, 60)), box_km=100.0, seed=t)
        assert np.all(inst.coverage >= 0)
        for (i, j), o in inst.overlap.items():
            assert i < j and 0 < o <= min(inst.coverage[i], inst.coverage[j])


def test_app_defaults_and_round_trip():
    inst = generate_app(10, None, 5, 20.0, seed=3)
    assert len(inst.devices) == 200
    back = AppInstance.from_dict(json.loads(inst.to_json()))
    assert back.coverage.tolist() == inst.coverage.tolist() and back.overlap == inst.overlap
    with pytest.raises(ValueError):
        generate_app(5, None, 6, 10.0)
    with pytest.raises(ValueError):
        generate_app(5, None, 2, 0.0)


def test_scale_radius():
    assert scale_radius(15.0, 50, 50) == 15.0
    assert scale_radius(15.0, 200, 50) == 7.5
    assert scale_radius(3.0, 4, 1) == 1.5
    with pytest.raises(ValueError):
        scale_radius(0.0, 1, 1)


def test_app_to_qubo():
    inst = AppInstance(np.array([[0.0, 0.0], [90.0, 90.0]]),
                       np.array([[0.0, 1.0], [1.0, 0.0], [0.0, -1.0], [-1.0, 0.0],
                                 [90.0, 91.0], [91.0, 90.0], [90.0, 89.0], [89.0, 90.0]]), 2.0, 1)
    qp = app_to_qubo(inst)
    assert inst.coverage.tolist() == [4, 4]
    assert qp.quadratic == {}
    assert qp.linear.tolist() == [-1.0, -1.0]
    assert evaluate_cost(qp, [0, 0]) == 0 and check_feasibility(qp, [0, 0]) == [0]
    cost, x = brute_force(qp)
    assert cost == -1.0 and x.sum() == 1


def test_generators_round_trip_json():
    for qp in (maxcut_to_qubo(generate_blob_graph(40, 2, 1.0, 1.0, seed=1)),
               app_to_qubo(generate_app(15, None, 7, 20.0, seed=1))):
        back = QuadraticProgram.from_dict(json.loads(dumps(qp)))
        assert back == qp
        assert json.loads(dumps(back)) == json.loads(dumps(qp))
