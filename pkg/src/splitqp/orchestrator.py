"""The iterative split-and-solve loop."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from . import _kernels
from .decomposition import (
    Decomposition,
    assign_local_constraints,
    compute_fields,
    distribute_capacity,
    quota_constraint,
)
from .partition import DENSE_NODE_LIMIT, Partition, build_graph, partition_greedy, partition_spectral
from .qp import Constraint, ConstraintKind, QuadraticProgram, as_assignment, check_feasibility, evaluate_cost
from .subsolvers import HARD_CONSTRAINT_SOLVERS, SolverBudget, Status, get_solver

log = logging.getLogger(__name__)

DOUBLE_FLIP_DENSE_LIMIT = 2000


class SolveFailure(RuntimeError):
    """A subproblem could not be solved; ``diagnostics`` says which."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class Infeasible(SolveFailure):
    pass


class Termination(str, Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    CYCLE = "Cycle"


@dataclass
class SplitConfig:
    k: int = 1
    n_iter: int = 500
    seed: int = 0
    partitioner: str = "spectral"  # spectral | greedy | external
    partition: list[int] | None = None  # per-node part indices for "external"
    subsolver: str = "branch_bound"
    node_budget: int | None = None
    wall_limit_s: float | None = None
    sweep: str | None = None  # single_flip | double_flip | both | none; None picks by constraints
    convergence_tol: float = 1e-9
    cycle_window: int = 10
    worker_count: int = 1
    penalty_weight: float = 10.0
    dense_limit: int = DENSE_NODE_LIMIT
    warm_start: list[int] | None = None

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if self.convergence_tol < 0 or self.cycle_window < 0:
            raise ValueError("tolerances must be non-negative")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.partitioner not in ("spectral", "greedy", "external"):
            raise ValueError(f"unknown partitioner {self.partitioner!r}")
        if self.sweep not in (None, "single_flip", "double_flip", "both", "none"):
            raise ValueError(f"unknown sweep {self.sweep!r}")
        if self.penalty_weight <= 0:
            raise ValueError("penalty_weight must be positive")

    @property
    def budget(self) -> SolverBudget:
        return SolverBudget(self.node_budget, self.wall_limit_s)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SplitConfig":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class IterationRecord:
    iteration: int
    cost_after_solve: float
    cost_after_sweep: float
    fields_norm: float
    feasible: bool
    time_fields: float
    time_solve: float
    time_sweep: float
    statuses: dict[str, int] = field(default_factory=dict)


@dataclass
class SolveReport:
    best_x: list[int]
    best_cost: float
    feasible: bool
    iterations_run: int
    termination: Termination
    tts_seconds: float
    time_partition: float
    k: int
    partition: list[int]
    iterations: list[IterationRecord] = field(default_factory=list)
    penalty_offset: float = 0.0

    @property
    def cost_trajectory(self) -> list[float]:
        return [r.cost_after_solve for r in self.iterations]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["termination"] = self.termination.value
        d["cost_trajectory"] = self.cost_trajectory
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolveReport":
        d = dict(d)
        d.pop("cost_trajectory", None)
        d["termination"] = Termination(d["termination"])
        d["iterations"] = [IterationRecord(**r) for r in d.get("iterations", [])]
        return cls(**d)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "SolveReport":
        return cls.from_dict(json.loads(text))


def _csr(qp: QuadraticProgram):
    m = qp.matrix
    return m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(float)


def sweep_single_flip(qp: QuadraticProgram, x) -> np.ndarray:
    """One pass in index order, keeping each flip that lowers the cost."""
    x = as_assignment(qp, x).astype(np.int64)
    indptr, indices, data = _csr(qp)
    return _kernels.single_flip_sweep(qp.linear.astype(float), indptr, indices, data, x.copy()).astype(np.int8)


def _double_flip_candidates(qp: QuadraticProgram, x, part, seed):
    n = qp.n
    rows, cols = qp.rows, qp.cols
    cross = part[rows] != part[cols]
    pairs = {(int(i), int(j)) for i, j in zip(rows[cross], cols[cross])}
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, n, size=(10 * n, 2))
    for i, j in draws:
        if i != j and part[i] != part[j]:
            pairs.add((int(min(i, j)), int(max(i, j))))
    ordered = sorted(pairs)
    pi = np.array([p[0] for p in ordered], dtype=np.int64)
    pj = np.array([p[1] for p in ordered], dtype=np.int64)
    return pi, pj


def sweep_double_flip(qp: QuadraticProgram, x, p: Partition, seed: int = 0) -> np.ndarray:
    """Flip opposite-valued pairs from different parts when that lowers the cost.

    Pairs are scanned in lexicographic order. Above
    ``DOUBLE_FLIP_DENSE_LIMIT`` variables the candidates are the cross edges
    plus ``10 n`` random cross-part pairs drawn from ``seed``.
    """
    x = as_assignment(qp, x).astype(np.int64).copy()
    part = np.asarray(p.assignment, dtype=np.int64)
    indptr, indices, data = _csr(qp)
    lin = qp.linear.astype(float)
    if qp.n <= DOUBLE_FLIP_DENSE_LIMIT:
        out = _kernels.double_flip_all_pairs(lin, indptr, indices, data, x, part)
    else:
        pi, pj = _double_flip_candidates(qp, x, part, seed)
        out = _kernels.double_flip_pairs(lin, indptr, indices, data, x, pi, pj)
    return out.astype(np.int8)


def penalty_augment(qp: QuadraticProgram, constraints, weight: float) -> tuple[QuadraticProgram, float]:
    """Add ``weight * (a.x - b)^2`` for each equality constraint.

    Returns the augmented program and the constant ``weight * b^2`` summed
    over constraints, which the program itself cannot carry.
    """
    if weight <= 0:
        raise ValueError("penalty weight must be positive")
    constraints = list(constraints)
    if not constraints:
        return qp, 0.0
    quad = dict(qp.quadratic)
    lin = qp.linear.copy()
    offset = 0.0
    for c in constraints:
        if not c.kind.is_equality:
            raise NotImplementedError("only equality constraints can be turned into penalties")
        a, s, bnd = c.coefficients, c.support, c.bound
        # (sum a_i x_i - b)^2 = sum a_i^2 x_i + 2 sum_{i<j} a_i a_j x_i x_j - 2b sum a_i x_i + b^2
        lin[s] += weight * (a * a - 2.0 * bnd * a)
        for u in range(len(s)):
            for v in range(u + 1, len(s)):
                i, j = int(s[u]), int(s[v])
                key = (i, j) if i < j else (j, i)
                quad[key] = quad.get(key, 0.0) + 2.0 * weight * a[u] * a[v]
        offset += weight * bnd * bnd
    kept = [c for c in qp.constraints if not any(c is d for d in constraints)]
    return QuadraticProgram(qp.n, quad, lin, kept), offset


def _make_partition(qp: QuadraticProgram, cfg: SplitConfig) -> Partition:
    if cfg.partitioner == "external":
        if cfg.partition is None:
            raise ValueError("partitioner 'external' needs cfg.partition")
        p = Partition.from_labels(cfg.partition)
        if p.n != qp.n:
            raise ValueError("external partition does not cover the program")
        return p
    if not 1 <= cfg.k <= max(qp.n, 1):
        raise ValueError(f"k={cfg.k} outside [1, {qp.n}]")
    g = build_graph(qp)
    if cfg.partitioner == "spectral":
        return partition_spectral(g, cfg.k, cfg.seed, dense_limit=cfg.dense_limit)
    return partition_greedy(g, cfg.k, cfg.seed)


class _Plan:
    """Constraint routing fixed for the whole solve."""

    def __init__(self, qp: QuadraticProgram, p: Partition, cfg: SplitConfig):
        cards = qp.cardinality_constraints()
        routing = assign_local_constraints(qp, p)
        self.penalised = [c for c in routing.unassignable if c.kind.is_equality]
        unsupported = [c for c in routing.unassignable if not c.kind.is_equality]
        if unsupported:
            raise ValueError(f"inequality constraints spanning several parts are not supported: {unsupported}")
        self.hard = cards + [c for part in routing.per_part for c in part]
        if self.hard and cfg.subsolver not in HARD_CONSTRAINT_SOLVERS:
            raise ValueError(f"subsolver {cfg.subsolver!r} cannot enforce hard constraints")
        self.working, self.offset = penalty_augment(qp, self.penalised, cfg.penalty_weight)
        self.dec = Decomposition(self.working, p)
        shares: list[list[Constraint]] = [[] for _ in range(p.k)]
        for c in cards:
            if c.kind is ConstraintKind.CARDINALITY_EQ and c.bound > len(c.support):
                raise Infeasible(f"capacity {int(c.bound)} exceeds the {len(c.support)} variables it covers",
                                 {"constraint": repr(c)})
            quotas = distribute_capacity(min(int(c.bound), len(c.support)), p, c.support)
            for k, members in enumerate(p.members):
                share = quota_constraint(c, quotas[k], members)
                if len(share.support) or share.kind is ConstraintKind.CARDINALITY_EQ:
                    shares[k].append(self.dec.localize(share, k))
        for k, local in enumerate(routing.per_part):
            shares[k].extend(self.dec.localize(c, k) for c in local)
        self.shares = shares

    def hard_feasible(self, x) -> bool:
        return all(c.holds(x) for c in self.hard)


def _default_sweep(qp: QuadraticProgram) -> str:
    return "both" if qp.cardinality_constraints() else "single_flip"


def split_solve(qp: QuadraticProgram, cfg: SplitConfig) -> SolveReport:
    solver = get_solver(cfg.subsolver)
    budget = cfg.budget
    t_start = time.perf_counter()
    p = _make_partition(qp, cfg)
    plan = _Plan(qp, p, cfg)
    working = plan.working
    t_partition = time.perf_counter() - t_start
    sweep = cfg.sweep or _default_sweep(qp)

    if cfg.warm_start is not None:
        x = as_assignment(qp, cfg.warm_start).astype(np.int8).copy()
    else:
        x = np.zeros(qp.n, dtype=np.int8)

    best_x, best_obj, last_x = None, np.inf, x.copy()
    history: list[float] = []
    records: list[IterationRecord] = []
    termination = Termination.MAX_ITER
    fields = compute_fields(x, plan.dec.cross)
    pool = ThreadPoolExecutor(max_workers=cfg.worker_count) if cfg.worker_count > 1 else None

    def solve_part(k):
        sub = plan.dec.subproblem(k, fields, plan.shares[k])
        return solver(sub, budget, cfg.seed + k)

    try:
        for it in range(1, cfg.n_iter + 1):
            t0 = time.perf_counter()
            parts = range(p.k)
            results = list(pool.map(solve_part, parts)) if pool else [solve_part(k) for k in parts]
            statuses: dict[str, int] = {}
            for k, res in enumerate(results):
                statuses[res.status.value] = statuses.get(res.status.value, 0) + 1
                if res.x is None:
                    diag = {"part": k, "status": res.status.value, "size": len(p.members[k]),
                            "constraints": [repr(c) for c in plan.shares[k]]}
                    cls = Infeasible if res.status is Status.INFEASIBLE else SolveFailure
                    raise cls(f"subproblem {k} returned no assignment ({res.status.value})", diag)
                x[p.members[k]] = res.x
            t1 = time.perf_counter()

            h_new = evaluate_cost(working, x) + plan.offset
            feasible = plan.hard_feasible(x)
            if feasible and h_new < best_obj:
                best_x, best_obj = x.copy(), h_new
            last_x = x.copy()

            converged = bool(history) and abs(h_new - history[-1]) <= cfg.convergence_tol
            cycled = (
                not converged
                and cfg.cycle_window > 0
                and any(abs(h_new - h) <= cfg.convergence_tol for h in history[-cfg.cycle_window:])
            )
            if not (converged or cycled):
                if sweep in ("double_flip", "both"):
                    x = sweep_double_flip(working, x, p, seed=cfg.seed + it)
                if sweep in ("single_flip", "both"):
                    x = sweep_single_flip(working, x)
            h_swept = evaluate_cost(working, x) + plan.offset
            t2 = time.perf_counter()

            new_fields = compute_fields(x, plan.dec.cross)
            t3 = time.perf_counter()
            records.append(IterationRecord(
                iteration=it,
                cost_after_solve=h_new,
                cost_after_sweep=h_swept,
                fields_norm=float(np.linalg.norm(fields)),
                feasible=feasible,
                time_fields=t3 - t2,
                time_solve=t1 - t0,
                time_sweep=t2 - t1,
                statuses=statuses,
            ))
            history.append(h_new)
            log.debug("iteration %d cost %.6g swept %.6g", it, h_new, h_swept)
            if converged:
                termination = Termination.CONVERGED
                break
            if cycled:
                termination = Termination.CYCLE
                break
            if budget.deterministic and np.array_equal(new_fields, fields):
                # identical fields reproduce this iteration's solve exactly
                termination = Termination.CONVERGED
                break
            fields = new_fields
    finally:
        if pool is not None:
            pool.shutdown()

    if best_x is None:
        best_x = last_x
    tts = time.perf_counter() - t_start
    return SolveReport(
        best_x=[int(v) for v in best_x],
        best_cost=evaluate_cost(qp, best_x),
        feasible=not check_feasibility(qp, best_x),
        iterations_run=len(records),
        termination=termination,
        tts_seconds=tts,
        time_partition=t_partition,
        k=p.k,
        partition=[int(v) for v in p.assignment],
        iterations=records,
        penalty_offset=plan.offset,
    )
