"""Split a quadratic program along a partition.

Each part ``k`` gets a subproblem whose linear terms absorb the interaction
with the frozen variables of the other parts (the local fields). Summing the
subproblem costs counts every cross edge twice; subtracting half of the
field/assignment product per part restores the original cost exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .partition import Partition
from .qp import Constraint, DimensionError, QuadraticProgram, as_assignment, evaluate_cost


@dataclass(frozen=True, eq=False)
class CrossEdges:
    """Couplings between nodes in different parts, stored from both ends."""

    matrix: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def of(self, i: int) -> list[tuple[int, float]]:
        m = self.matrix
        start, stop = m.indptr[i], m.indptr[i + 1]
        return [(int(j), float(v)) for j, v in zip(m.indices[start:stop], m.data[start:stop])]

    def pairs(self) -> set[tuple[int, int]]:
        coo = sp.triu(self.matrix, k=1).tocoo()
        return {(int(i), int(j)) for i, j in zip(coo.row, coo.col)}

    @property
    def has_edges(self) -> np.ndarray:
        return np.diff(self.matrix.indptr) > 0


@dataclass(frozen=True, eq=False)
class Subproblem:
    part_index: int
    nodes: np.ndarray
    program: QuadraticProgram

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def effective_linear(self) -> np.ndarray:
        return self.program.linear

    @property
    def internal_quadratic(self) -> dict[tuple[int, int], float]:
        return self.program.quadratic

    @property
    def constraint_share(self) -> tuple[Constraint, ...]:
        return self.program.constraints


def _check_cover(qp: QuadraticProgram, p: Partition) -> None:
    if p.n != qp.n:
        raise DimensionError(f"partition covers {p.n} nodes, program has {qp.n}")


def build_cross_edges(qp: QuadraticProgram, p: Partition) -> CrossEdges:
    _check_cover(qp, p)
    coo = qp.matrix.tocoo()
    keep = p.assignment[coo.row] != p.assignment[coo.col]
    m = sp.csr_matrix((coo.data[keep], (coo.row[keep], coo.col[keep])), shape=(qp.n, qp.n))
    m.sort_indices()
    return CrossEdges(m)


def compute_fields(x, ce: CrossEdges) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1 or len(x) != ce.n:
        raise DimensionError(f"assignment has shape {x.shape}, expected ({ce.n},)")
    return ce.matrix @ x.astype(float)


class Decomposition:
    """Per-part internal structure of ``qp`` under ``p``, built once.

    ``subproblem`` only swaps in new linear terms, so it is cheap to call
    every iteration.
    """

    def __init__(self, qp: QuadraticProgram, p: Partition):
        _check_cover(qp, p)
        self.qp = qp
        self.partition = p
        self.cross = build_cross_edges(qp, p)
        local = np.empty(qp.n, dtype=np.int64)
        for nodes in p.members:
            local[nodes] = np.arange(len(nodes))
        self.local_index = local
        part_r = p.assignment[qp.rows]
        internal = part_r == p.assignment[qp.cols]
        self._internal = []
        for k, nodes in enumerate(p.members):
            sel = internal & (part_r == k)
            rows, cols, vals = local[qp.rows[sel]], local[qp.cols[sel]], qp.values[sel]
            # rows/cols already canonical: members are sorted so local order follows global order
            base = QuadraticProgram._from_canonical(len(nodes), qp.linear[nodes], rows, cols, vals)
            self._internal.append(base)

    def subproblem(self, k: int, fields: np.ndarray, constraints=()) -> Subproblem:
        if not 0 <= k < self.partition.k:
            raise IndexError(f"part {k} out of range for k={self.partition.k}")
        nodes = self.partition.members[k]
        base = self._internal[k]
        program = base.with_linear(self.qp.linear[nodes] + fields[nodes], constraints)
        return Subproblem(k, nodes, program)

    def localize(self, c: Constraint, k: int) -> Constraint:
        return c.remap(self.local_index)


def build_subproblem(qp: QuadraticProgram, p: Partition, k: int, d, quota: Constraint | None = None) -> Subproblem:
    """Subproblem for part ``k`` under fields ``d``.

    ``quota`` must be expressed in global indices; it is translated to the
    subproblem's local indexing.
    """
    dec = Decomposition(qp, p)
    d = np.asarray(d, dtype=float)
    if len(d) != qp.n:
        raise DimensionError("fields length mismatch")
    constraints = () if quota is None else (dec.localize(quota, k),)
    return dec.subproblem(k, d, constraints)


def correction_delta(sp_: Subproblem | None, x_k, d_k) -> float:
    x_k = np.asarray(x_k, dtype=float)
    d_k = np.asarray(d_k, dtype=float)
    if x_k.shape != d_k.shape or (sp_ is not None and len(x_k) != sp_.size):
        raise DimensionError("local assignment and field slice lengths differ")
    return 0.5 * float(np.dot(d_k, x_k))


def reconstruct_cost(qp: QuadraticProgram, p: Partition, x) -> float:
    """``sum_k (H_k - Delta_k)`` evaluated at ``x``; equals the original cost."""
    x = as_assignment(qp, x)
    dec = Decomposition(qp, p)
    d = compute_fields(x, dec.cross)
    total = 0.0
    for k, nodes in enumerate(p.members):
        sub = dec.subproblem(k, d)
        x_k = x[nodes]
        total += evaluate_cost(sub.program, x_k) - correction_delta(sub, x_k, d[nodes])
    return total


def distribute_capacity(v: int, p: Partition, support=None) -> list[int]:
    """Integer per-part quotas summing to ``v``, proportional to part sizes.

    Floors of ``v * |S_k| / N`` plus largest-remainder rounding, ties to the
    lower part index. A quota that would exceed its part's size spills the
    excess onward in the same order. With ``support`` given, sizes and ``N``
    count only nodes in the support.
    """
    if support is None:
        counts = np.array(p.sizes, dtype=np.int64)
    else:
        mask = np.zeros(p.n, dtype=bool)
        mask[np.asarray(support, dtype=np.int64)] = True
        counts = np.bincount(p.assignment[mask], minlength=p.k).astype(np.int64)
    total = int(counts.sum())
    v = int(v)
    if not 0 <= v <= total:
        raise ValueError(f"capacity {v} outside [0, {total}]")
    if total == 0:
        return [0] * p.k
    exact = v * counts
    quotas = exact // total
    frac = exact - quotas * total
    order = sorted(range(p.k), key=lambda k: (-int(frac[k]), k))
    remainder = v - int(quotas.sum())
    for k in order[:remainder]:
        quotas[k] += 1
    overflow = 0
    for k in order:
        excess = quotas[k] - counts[k]
        if excess > 0:
            quotas[k] = counts[k]
            overflow += int(excess)
    for k in order:
        if overflow == 0:
            break
        room = int(counts[k] - quotas[k])
        take = min(room, overflow)
        quotas[k] += take
        overflow -= take
    return [int(q) for q in quotas]


@dataclass
class ConstraintRouting:
    per_part: list[list[Constraint]]
    unassignable: list[Constraint]


def assign_local_constraints(qp: QuadraticProgram, p: Partition) -> ConstraintRouting:
    """Attach each general linear constraint to the part containing its whole
    support. Cardinality constraints are left to :func:`distribute_capacity`."""
    _check_cover(qp, p)
    per_part: list[list[Constraint]] = [[] for _ in range(p.k)]
    unassignable: list[Constraint] = []
    for c in qp.constraints:
        if c.kind.is_cardinality:
            continue
        parts = np.unique(p.assignment[c.support])
        if len(parts) == 1:
            per_part[int(parts[0])].append(c)
        else:
            unassignable.append(c)
    return ConstraintRouting(per_part, unassignable)


def quota_constraint(c: Constraint, quota: int, members: np.ndarray) -> Constraint:
    """Restrict a cardinality constraint to one part with its share ``quota``."""
    return Constraint(c.kind, np.intersect1d(c.support, members), None, quota)
