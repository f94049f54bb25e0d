"""Reference solutions for the whole, undecomposed problem.

Two independent routes: the package's own branch-and-bound applied to the
full program, and a mixed-integer linear reformulation handed to HiGHS
(through scipy). The latter linearises every product with a McCormick
variable and adds the triangle inequalities of the boolean quadric polytope
for every triangle of the interaction graph, which is what makes MaxCut on
proximity graphs tractable at a few hundred variables.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse.csgraph import connected_components

from .qp import QuadraticProgram, check_feasibility, evaluate_cost
from .subsolvers import SolverBudget, Status, solve_branch_bound

MAX_TRIANGLES = 200_000
AUTO_BB_LIMIT = 40


@dataclass
class ExactResult:
    x: np.ndarray | None
    cost: float
    optimal: bool
    method: str
    seconds: float
    infeasible: bool = False


def _triangles(qp: QuadraticProgram, limit: int):
    adj = [set(qp.neighbors(i)[0].tolist()) for i in range(qp.n)]
    out = []
    for a, b in zip(qp.rows.tolist(), qp.cols.tolist()):
        for c in adj[a] & adj[b]:
            if c > b:
                out.append((a, b, c))
                if len(out) > limit:
                    return out[:limit]
    return out


def _components(qp: QuadraticProgram) -> list[np.ndarray]:
    count, labels = connected_components(qp.matrix, directed=False)
    order = np.argsort(labels, kind="stable")
    return np.split(order, np.cumsum(np.bincount(labels, minlength=count))[:-1])


def _restrict(qp: QuadraticProgram, nodes: np.ndarray) -> QuadraticProgram:
    local = np.full(qp.n, -1, dtype=np.int64)
    local[nodes] = np.arange(len(nodes))
    keep = local[qp.rows] >= 0
    return QuadraticProgram._from_canonical(len(nodes), qp.linear[nodes], local[qp.rows[keep]],
                                            local[qp.cols[keep]], qp.values[keep])


def solve_milp(qp: QuadraticProgram, time_limit: float | None = None, triangles: bool = True,
               split_components: bool = True) -> ExactResult:
    """HiGHS on the linearised program.

    Without constraints the cost separates over connected components of the
    interaction graph, and each one is solved on its own.
    """
    t0 = time.perf_counter()
    if split_components and not qp.constraints and qp.n > 1:
        comps = _components(qp)
        if len(comps) > 1:
            x = np.zeros(qp.n, dtype=np.int8)
            optimal = True
            for nodes in comps:
                remaining = None if time_limit is None else max(time_limit - (time.perf_counter() - t0), 1e-3)
                part = _solve_milp(_restrict(qp, nodes), remaining, triangles)
                if part.x is None:
                    return ExactResult(None, np.inf, False, "milp", time.perf_counter() - t0, part.infeasible)
                x[nodes] = part.x
                optimal &= part.optimal
            return ExactResult(x, evaluate_cost(qp, x), optimal, "milp", time.perf_counter() - t0)
    res = _solve_milp(qp, time_limit, triangles)
    res.seconds = time.perf_counter() - t0
    return res


def _solve_milp(qp: QuadraticProgram, time_limit: float | None, triangles: bool) -> ExactResult:
    t0 = time.perf_counter()
    n, m = qp.n, qp.num_pairs
    pair_index = {(int(i), int(j)): n + e for e, (i, j) in enumerate(zip(qp.rows, qp.cols))}
    rows, cols, vals, lo, hi = [], [], [], [], []
    r = 0

    def add(entries, lower, upper):
        nonlocal r
        for c, v in entries:
            rows.append(r)
            cols.append(c)
            vals.append(v)
        lo.append(lower)
        hi.append(upper)
        r += 1

    for e, (i, j, q) in enumerate(zip(qp.rows.tolist(), qp.cols.tolist(), qp.values.tolist())):
        y = n + e
        if q > 0:
            add([(y, 1.0), (i, -1.0), (j, -1.0)], -1.0, np.inf)
        else:
            add([(y, 1.0), (i, -1.0)], -np.inf, 0.0)
            add([(y, 1.0), (j, -1.0)], -np.inf, 0.0)
    if triangles and m:
        for a, b, c in _triangles(qp, MAX_TRIANGLES):
            yab, yac, ybc = pair_index[(a, b)], pair_index[(a, c)], pair_index[(b, c)]
            add([(a, 1.0), (b, 1.0), (c, 1.0), (yab, -1.0), (yac, -1.0), (ybc, -1.0)], -np.inf, 1.0)
            add([(yab, 1.0), (yac, 1.0), (a, -1.0), (ybc, -1.0)], -np.inf, 0.0)
            add([(yab, 1.0), (ybc, 1.0), (b, -1.0), (yac, -1.0)], -np.inf, 0.0)
            add([(yac, 1.0), (ybc, 1.0), (c, -1.0), (yab, -1.0)], -np.inf, 0.0)
    for con in qp.constraints:
        entries = list(zip(con.support.tolist(), con.coefficients.tolist()))
        if con.kind.is_equality:
            add(entries, con.bound, con.bound)
        else:
            add(entries, -np.inf, con.bound)

    c = np.concatenate([qp.linear, qp.values])
    integrality = np.ones(n + m)
    constraints = []
    if r:
        A = sp.csr_matrix((vals, (rows, cols)), shape=(r, n + m))
        constraints = [LinearConstraint(A, lo, hi)]
    options = {"mip_rel_gap": 1e-9}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = milp(c, constraints=constraints, integrality=integrality, bounds=Bounds(0.0, 1.0), options=options)
    seconds = time.perf_counter() - t0
    if res.x is None:
        return ExactResult(None, np.inf, False, "milp", seconds, infeasible=res.status == 2)
    x = np.rint(res.x[:n]).astype(np.int8)
    if check_feasibility(qp, x):
        return ExactResult(None, np.inf, False, "milp", seconds)
    return ExactResult(x, evaluate_cost(qp, x), res.status == 0, "milp", seconds)


def solve_exact(qp: QuadraticProgram, method: str = "auto", time_limit: float | None = None,
                node_budget: int | None = None) -> ExactResult:
    """Solve the whole program. ``optimal`` is False when a limit stopped the search."""
    if method == "auto":
        method = "branch_bound" if qp.n <= AUTO_BB_LIMIT else "milp"
    if method == "milp":
        return solve_milp(qp, time_limit)
    if method == "branch_bound":
        t0 = time.perf_counter()
        sol = solve_branch_bound(qp, SolverBudget(node_budget, time_limit))
        return ExactResult(sol.x, sol.cost, sol.status is Status.OPTIMAL, "branch_bound", time.perf_counter() - t0,
                           sol.status is Status.INFEASIBLE)
    raise ValueError(f"unknown exact method {method!r}")
