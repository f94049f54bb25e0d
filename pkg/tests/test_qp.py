import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force, dense_cost, random_qp
from splitqp.instances import WeightedGraph, maxcut_to_qubo
from splitqp.qp import (Constraint, ConstraintKind, DimensionError, QuadraticProgram, check_feasibility,
                        dumps, evaluate_cost, flip_delta, load, load_with_meta, save)


def triangle():
    return maxcut_to_qubo(WeightedGraph.from_edges(3, [(0, 1, 1), (0, 2, 1), (1, 2, 1)]))


def test_zero_assignment_costs_zero():
    rng = np.random.default_rng(0)
    qp = random_qp(rng, 12)
    assert evaluate_cost(qp, np.zeros(12, dtype=int)) == 0.0


def test_triangle_cost():
    assert evaluate_cost(triangle(), [1, 0, 0]) == -2.0
    # every state against the enumeration oracle
    qp = triangle()
    for s in range(8):
        x = [(s >> b) & 1 for b in range(3)]
        assert evaluate_cost(qp, x) == dense_cost(qp, x)
    assert brute_force(qp)[0] == -2.0


def test_linear_only_cost():
    qp = QuadraticProgram(2, {}, [1.5, -2.0])
    assert evaluate_cost(qp, [1, 1]) == pytest.approx(-0.5, abs=0)


def test_cost_length_mismatch():
    with pytest.raises(DimensionError):
        evaluate_cost(triangle(), [1, 0])


def test_feasibility_examples():
    card = QuadraticProgram(4, {}, None, [Constraint.cardinality(range(4), 2)])
    assert check_feasibility(card, [1, 0, 1, 0]) == []
    assert check_feasibility(card, [1, 1, 1, 0]) == [0]
    lin = QuadraticProgram(2, {}, None, [Constraint.linear([0, 1], [2, 3], 4, equality=False)])
    assert check_feasibility(lin, [1, 1]) == [0]
    assert check_feasibility(lin, [0, 1]) == []
    with pytest.raises(DimensionError):
        check_feasibility(card, [1, 0])


def test_linear_equality_tolerance():
    c = Constraint.linear([0, 1], [0.1, 0.2], 0.3)
    qp = QuadraticProgram(2, {}, None, [c])
    assert check_feasibility(qp, [1, 1]) == []


def test_flip_delta_examples():
    rng = np.random.default_rng(1)
    qp = random_qp(rng, 8)
    zero = np.zeros(8, dtype=int)
    for i in range(8):
        assert flip_delta(qp, zero, i) == qp.linear[i]
    assert flip_delta(triangle(), [1, 0, 0], 0) == 2.0
    x = rng.integers(0, 2, 8)
    for i in range(8):
        y = x.copy()
        y[i] ^= 1
        assert flip_delta(qp, x, i) + flip_delta(qp, y, i) == 0
    with pytest.raises(IndexError):
        flip_delta(qp, x, 8)


def test_flip_delta_matches_cost_difference():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n = int(rng.integers(1, 20))
        qp = random_qp(rng, n, density=rng.random(), integer=False)
        x = rng.integers(0, 2, n)
        i = int(rng.integers(0, n))
        y = x.copy()
        y[i] ^= 1
        assert abs(flip_delta(qp, x, i) - (evaluate_cost(qp, y) - evaluate_cost(qp, x))) <= 1e-9


def test_storage_order_and_key_orientation():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(2, 15))
        qp = random_qp(rng, n, integer=False)
        items = list(qp.quadratic.items())
        rng.shuffle(items)
        flipped = QuadraticProgram(n, {(j, i): v for (i, j), v in items}, qp.linear)
        x = rng.integers(0, 2, n)
        assert evaluate_cost(flipped, x) == pytest.approx(evaluate_cost(qp, x), abs=1e-12)
        assert flipped == qp


def test_symmetric_lookup_and_no_zeros():
    qp = QuadraticProgram(3, {(2, 0): 1.5, (0, 1): 0.0}, None)
    assert qp.coefficient(0, 2) == qp.coefficient(2, 0) == 1.5
    assert qp.coefficient(0, 1) == 0.0
    assert qp.num_pairs == 1


@pytest.mark.parametrize("quad", [{(0, 0): 1.0}, {(0, 3): 1.0}, {(-1, 0): 1.0}])
def test_invalid_pairs_rejected(quad):
    with pytest.raises((ValueError, IndexError)):
        QuadraticProgram(3, quad)


def test_duplicate_pair_rejected():
    with pytest.raises(ValueError):
        QuadraticProgram(3, [(0, 1, 1.0), (1, 0, 2.0)])


def test_constraint_validation():
    with pytest.raises(ValueError):
        Constraint.cardinality([0, 0], 1)
    with pytest.raises(ValueError):
        Constraint.cardinality([0, 1], 1.5)
    with pytest.raises(ValueError):
        Constraint(ConstraintKind.CARDINALITY_EQ, [0, 1], [1, 2], 1)
    with pytest.raises((ValueError, IndexError)):
        QuadraticProgram(2, {}, None, [Constraint.cardinality([0, 5], 1)])


def test_json_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    qp = random_qp(rng, 10, integer=False, constraints=[Constraint.cardinality(range(10), 4),
                                                        Constraint.linear([1, 2], [0.5, -1.25], 0.3, False)])
    back = QuadraticProgram.from_dict(json.loads(dumps(qp)))
    assert back == qp
    path = tmp_path / "p.json"
    save(qp, path, kind="test")
    assert load(path) == qp
    assert load_with_meta(path)[1] == {"kind": "test"}
    d = json.loads(dumps(qp))
    assert set(d) == {"n", "quadratic", "linear", "constraints"}


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**31 - 1))
def test_cost_matches_dense_oracle(n, seed):
    rng = np.random.default_rng(seed)
    qp = random_qp(rng, n, integer=False)
    x = rng.integers(0, 2, n)
    assert evaluate_cost(qp, x) == pytest.approx(dense_cost(qp, x), abs=1e-9)
