"""Solvers for (sub)problems behind a common call signature.

Every solver takes a :class:`~splitqp.decomposition.Subproblem` or a bare
:class:`~splitqp.qp.QuadraticProgram` and returns a :class:`SubSolution`
whose assignment satisfies every attached constraint, or reports
``Infeasible``. New solvers can be added with :func:`register_solver`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from . import _kernels
from .decomposition import Subproblem
from .qp import EQ_TOL, ConstraintKind, QuadraticProgram, evaluate_cost

EXHAUSTIVE_CAP = 26
_SLICE_NODES = 100_000
_NO_LIMIT = np.iinfo(np.int64).max // 2


class Status(str, Enum):
    OPTIMAL = "Optimal"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class SolverBudget:
    """Search limits; ``None`` means unlimited. Whichever trips first stops."""

    node_budget: int | None = None
    wall_limit: float | None = None

    @property
    def deterministic(self) -> bool:
        return self.wall_limit is None


@dataclass
class SubSolution:
    x: np.ndarray | None
    cost: float
    status: Status
    nodes: int = 0


class SubproblemTooLarge(ValueError):
    pass


def _program(sp) -> QuadraticProgram:
    return sp.program if isinstance(sp, Subproblem) else sp


def _constraint_arrays(qp: QuadraticProgram):
    m = len(qp.constraints)
    A = np.zeros((m, qp.n))
    b = np.zeros(m)
    is_eq = np.zeros(m, dtype=np.bool_)
    for r, c in enumerate(qp.constraints):
        A[r, c.support] = c.coefficients
        b[r] = c.bound
        is_eq[r] = c.kind.is_equality
    return A, b, is_eq


def _feasible_mask(lhs: np.ndarray, b: np.ndarray, is_eq: np.ndarray) -> np.ndarray:
    """``lhs`` has constraints on the last axis."""
    ok_eq = np.abs(lhs - b) <= EQ_TOL
    ok_le = lhs <= b + EQ_TOL
    return np.where(is_eq, ok_eq, ok_le).all(axis=-1)


def _finish(qp, x, status, nodes=0) -> SubSolution:
    x = np.asarray(x, dtype=np.int8)
    return SubSolution(x, evaluate_cost(qp, x), status, nodes)


def solve_exhaustive(sp, budget: SolverBudget | None = None, seed: int = 0, cap: int = EXHAUSTIVE_CAP) -> SubSolution:
    """Enumerate every assignment; ties go to the lexicographically smallest."""
    qp = _program(sp)
    n = qp.n
    if n > cap:
        raise SubproblemTooLarge(f"{n} variables exceeds the exhaustive cap of {cap}")
    A, b, is_eq = _constraint_arrays(qp)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    best_cost, best_state = np.inf, -1
    chunk = 1 << min(n, 16)
    for start in range(0, 1 << n, chunk):
        states = np.arange(start, start + chunk, dtype=np.int64)
        bits = ((states[:, None] >> shifts[None, :]) & 1).astype(float)
        cost = bits @ qp.linear
        if qp.num_pairs:
            cost += (bits[:, qp.rows] * bits[:, qp.cols]) @ qp.values
        if len(b):
            cost = np.where(_feasible_mask(bits @ A.T, b, is_eq), cost, np.inf)
        i = int(np.argmin(cost))
        if cost[i] < best_cost:
            best_cost, best_state = cost[i], int(states[i])
    if best_state < 0:
        return SubSolution(None, np.inf, Status.INFEASIBLE, 1 << n)
    x = (best_state >> shifts) & 1
    return _finish(qp, x, Status.OPTIMAL, 1 << n)


def _initial_point(qp: QuadraticProgram):
    """Zeros, with every cardinality equality filled by its lowest-linear
    variables. ``None`` if a quota exceeds its support."""
    x = np.zeros(qp.n, dtype=np.int8)
    for c in qp.constraints:
        if c.kind is ConstraintKind.CARDINALITY_EQ:
            q = int(c.bound)
            if q > len(c.support):
                return None
            free = c.support[x[c.support] == 0]
            already = int(x[c.support].sum())
            need = q - already
            if need < 0 or need > len(free):
                return None
            pick = free[np.lexsort((free, qp.linear[free]))[:need]]
            x[pick] = 1
    return x


def _repair(qp, x, A, b, is_eq):
    """Greedy single flips reducing total constraint violation."""
    def violation(lhs):
        v = np.where(is_eq, np.abs(lhs - b), np.maximum(lhs - b, 0.0))
        v[v <= EQ_TOL] = 0.0
        return v.sum(axis=-1)

    lhs = A @ x
    current = violation(lhs)
    while current > 0:
        sign = 1 - 2 * x.astype(float)
        trial = lhs[None, :] + (A * sign[None, :]).T
        viol = violation(trial)
        i = int(np.argmin(viol))
        if viol[i] >= current - EQ_TOL:
            return None
        x[i] = 1 - x[i]
        lhs = trial[i]
        current = viol[i]
    return x


def solve_greedy(sp, budget: SolverBudget | None = None, seed: int = 0) -> SubSolution:
    """Best-improvement local search over single flips and 1-0 swaps that keep
    every constraint satisfied. Never claims optimality."""
    qp = _program(sp)
    n = qp.n
    A, b, is_eq = _constraint_arrays(qp)
    x = _initial_point(qp)
    if x is None:
        return SubSolution(None, np.inf, Status.INFEASIBLE)
    if len(b) and not _feasible_mask(A @ x, b, is_eq):
        x = _repair(qp, x, A, b, is_eq)
        if x is None:
            return SubSolution(None, np.inf, Status.INFEASIBLE)
    if n == 0:
        return _finish(qp, x, Status.BUDGET_EXHAUSTED)
    rng = np.random.default_rng(seed)
    scan = rng.permutation(n)
    rank = np.empty(n, dtype=np.int64)
    rank[scan] = np.arange(n)
    Q = qp.matrix
    constrained = len(b) > 0
    while True:
        f = qp.linear + Q @ x.astype(float)
        sign = 1.0 - 2.0 * x
        flip = sign * f
        if constrained:
            lhs = A @ x
            ok = _feasible_mask(lhs[None, :] + (A * sign[None, :]).T, b, is_eq)
            flip = np.where(ok, flip, np.inf)
        i = int(scan[np.argmin(flip[scan])])
        best_move, best_delta = ("flip", i), flip[i]
        if constrained:
            ones = np.flatnonzero(x == 1)
            zeros = np.flatnonzero(x == 0)
            if len(ones) and len(zeros):
                ones = ones[np.argsort(rank[ones])]
                zeros = zeros[np.argsort(rank[zeros])]
                swap = f[zeros][None, :] - f[ones][:, None] - Q[ones][:, zeros].toarray()
                moved = lhs[None, None, :] + A[:, zeros].T[None, :, :] - A[:, ones].T[:, None, :]
                swap = np.where(_feasible_mask(moved, b, is_eq), swap, np.inf)
                a, z = np.unravel_index(int(np.argmin(swap)), swap.shape)
                if swap[a, z] < best_delta:
                    best_move, best_delta = ("swap", ones[a], zeros[z]), swap[a, z]
        if not best_delta < -1e-12:
            break
        for v in best_move[1:]:
            x[v] = 1 - x[v]
    return _finish(qp, x, Status.BUDGET_EXHAUSTED)


def variable_order(qp: QuadraticProgram) -> np.ndarray:
    """Descending ``|Q_ii| + sum_j |Q_ij|``, ties by index."""
    score = np.abs(qp.linear) + np.asarray(abs(qp.matrix).sum(axis=1)).ravel()
    return np.lexsort((np.arange(qp.n), -score)).astype(np.int64)


def _full_cardinality_row(qp: QuadraticProgram) -> int:
    for r, c in enumerate(qp.constraints):
        if c.kind.is_cardinality and len(c.support) == qp.n:
            return r
    return -1


def solve_branch_bound(sp, budget: SolverBudget | None = None, seed: int = 0) -> SubSolution:
    """Depth-first branch-and-bound with a greedy incumbent.

    The bound adds, per undecided variable, ``min(0, field_i + sum of its
    negative couplings to undecided variables)`` to the decided cost. With a
    cardinality constraint over all variables only the ``r`` smallest such
    terms are summed, ``r`` being the ones still to place. Constraints prune
    by partial-sum feasibility.
    """
    qp = _program(sp)
    budget = budget or SolverBudget()
    n = qp.n
    A, b, is_eq = _constraint_arrays(qp)
    if _initial_point(qp) is None:
        return SubSolution(None, np.inf, Status.INFEASIBLE)
    if n == 0:
        ok = not len(b) or _feasible_mask(np.zeros(len(b)), b, is_eq)
        if ok:
            return _finish(qp, np.zeros(0), Status.OPTIMAL)
        return SubSolution(None, np.inf, Status.INFEASIBLE)

    start = time.perf_counter()
    incumbent = solve_greedy(qp, seed=seed)
    best_x = np.zeros(n, dtype=np.int64)
    best_cost = np.inf
    if incumbent.x is not None:
        best_x[:] = incumbent.x
        best_cost = incumbent.cost

    m = qp.matrix
    indptr = m.indptr.astype(np.int64)
    indices = m.indices.astype(np.int64)
    data = m.data.astype(float)
    neg = np.minimum(data, 0.0)
    negsum = np.zeros(n)
    np.add.at(negsum, np.repeat(np.arange(n), np.diff(indptr)), neg)
    state = dict(
        pos_arr=np.zeros(1, dtype=np.int64),
        stage=np.zeros(n + 1, dtype=np.int64),
        vals=np.zeros(n + 1, dtype=np.int64),
        c=qp.linear.astype(float).copy(),
        negsum=negsum,
        lhs=np.zeros(len(b)),
        rmin=np.minimum(A, 0.0).sum(axis=1),
        rmax=np.maximum(A, 0.0).sum(axis=1),
        x=np.zeros(n, dtype=np.int64),
        decided=np.zeros(n, dtype=np.bool_),
        best_x=best_x,
        fstate=np.array([0.0, best_cost]),
        counters=np.zeros(1, dtype=np.int64),
    )
    order = variable_order(qp)
    card_row = _full_cardinality_row(qp)
    total = _NO_LIMIT if budget.node_budget is None else int(budget.node_budget)
    done = False
    while True:
        remaining = total - int(state["counters"][0])
        if remaining <= 0:
            break
        step = remaining if budget.wall_limit is None else min(remaining, _SLICE_NODES)
        rc = _kernels.bb_search(indptr, indices, data, order, A, b, is_eq, card_row, max_nodes=step, **state)
        if rc == 0:
            done = True
            break
        if budget.wall_limit is not None and time.perf_counter() - start >= budget.wall_limit:
            break
    nodes = int(state["counters"][0])
    if not np.isfinite(state["fstate"][1]):
        status = Status.INFEASIBLE if done else Status.BUDGET_EXHAUSTED
        return SubSolution(None, np.inf, status, nodes)
    return _finish(qp, state["best_x"], Status.OPTIMAL if done else Status.BUDGET_EXHAUSTED, nodes)


Solver = Callable[..., SubSolution]

_REGISTRY: dict[str, Solver] = {
    "exhaustive": solve_exhaustive,
    "branch_bound": solve_branch_bound,
    "greedy": solve_greedy,
}

HARD_CONSTRAINT_SOLVERS = {"exhaustive", "branch_bound", "greedy"}


def register_solver(name: str, fn: Solver, hard_constraints: bool = False) -> None:
    """Make ``fn(subproblem, budget, seed) -> SubSolution`` selectable by name."""
    _REGISTRY[name] = fn
    if hard_constraints:
        HARD_CONSTRAINT_SOLVERS.add(name)
    else:
        HARD_CONSTRAINT_SOLVERS.discard(name)


def get_solver(name: str) -> Solver:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown subsolver {name!r}; choose from {sorted(_REGISTRY)}") from None


def available_solvers() -> list[str]:
    return sorted(_REGISTRY)
