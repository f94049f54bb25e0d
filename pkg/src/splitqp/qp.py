"""Binary quadratic programs: storage, exact cost evaluation and JSON I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

EQ_TOL = 1e-9


class DimensionError(ValueError):
    """Assignment length does not match the program size."""


class ConstraintKind(str, Enum):
    CARDINALITY_EQ = "CardinalityEq"
    CARDINALITY_LE = "CardinalityLe"
    LINEAR_EQ = "LinearEq"
    LINEAR_LE = "LinearLe"

    @property
    def is_cardinality(self) -> bool:
        return self in (ConstraintKind.CARDINALITY_EQ, ConstraintKind.CARDINALITY_LE)

    @property
    def is_equality(self) -> bool:
        return self in (ConstraintKind.CARDINALITY_EQ, ConstraintKind.LINEAR_EQ)


@dataclass(frozen=True, eq=False)
class Constraint:
    """``sum(coefficients * x[support]) (== | <=) bound``."""

    kind: ConstraintKind
    support: np.ndarray
    coefficients: np.ndarray
    bound: float

    def __post_init__(self):
        kind = ConstraintKind(self.kind)
        support = np.asarray(self.support, dtype=np.int64).reshape(-1)
        if self.coefficients is None:
            coefs = np.ones(len(support))
        else:
            coefs = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if len(coefs) != len(support):
            raise ValueError("coefficients must align with support")
        if len(np.unique(support)) != len(support):
            raise ValueError("constraint support indices must be unique")
        if kind.is_cardinality:
            if not np.all(coefs == 1.0):
                raise ValueError("cardinality constraints have unit coefficients")
            if self.bound < 0 or float(self.bound) != int(self.bound):
                raise ValueError("cardinality bound must be a non-negative integer")
        support.flags.writeable = False
        coefs.flags.writeable = False
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "coefficients", coefs)
        object.__setattr__(self, "bound", float(self.bound))

    @classmethod
    def cardinality(cls, support, bound, equality=True) -> "Constraint":
        kind = ConstraintKind.CARDINALITY_EQ if equality else ConstraintKind.CARDINALITY_LE
        return cls(kind, np.asarray(support), None, bound)

    @classmethod
    def linear(cls, support, coefficients, bound, equality=True) -> "Constraint":
        kind = ConstraintKind.LINEAR_EQ if equality else ConstraintKind.LINEAR_LE
        return cls(kind, np.asarray(support), np.asarray(coefficients, dtype=float), bound)

    def lhs(self, x: np.ndarray) -> float:
        return float(np.dot(self.coefficients, x[self.support]))

    def holds(self, x: np.ndarray) -> bool:
        value = self.lhs(x)
        if self.kind.is_equality:
            return abs(value - self.bound) <= EQ_TOL
        return value <= self.bound + EQ_TOL

    def remap(self, index_map: Mapping[int, int] | np.ndarray) -> "Constraint":
        """Same constraint with support translated through ``index_map``."""
        support = np.array([index_map[int(i)] for i in self.support], dtype=np.int64)
        return Constraint(self.kind, support, self.coefficients, self.bound)

    def with_bound(self, bound) -> "Constraint":
        return Constraint(self.kind, self.support, self.coefficients, bound)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "support": [int(i) for i in self.support],
            "coefficients": [float(a) for a in self.coefficients],
            "bound": self.bound,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Constraint":
        return cls(ConstraintKind(d["kind"]), d["support"], d.get("coefficients"), d["bound"])

    def __eq__(self, other):
        if not isinstance(other, Constraint):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.bound == other.bound
            and np.array_equal(self.support, other.support)
            and np.array_equal(self.coefficients, other.coefficients)
        )

    def __repr__(self):
        return f"Constraint({self.kind.value}, support={list(self.support)}, bound={self.bound})"


def _canonical_pairs(n: int, quadratic) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(quadratic, Mapping):
        items = ((i, j, v) for (i, j), v in quadratic.items())
    else:
        items = quadratic
    rows, cols, vals = [], [], []
    seen = set()
    for i, j, v in items:
        i, j = int(i), int(j)
        if i == j:
            raise ValueError(f"diagonal entry ({i},{i}) belongs in the linear term")
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"pair ({i},{j}) out of range for n={n}")
        key = (i, j) if i < j else (j, i)
        if key in seen:
            raise ValueError(f"pair {key} given more than once")
        seen.add(key)
        if v != 0:
            rows.append(key[0])
            cols.append(key[1])
            vals.append(float(v))
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    order = np.lexsort((cols, rows))
    return rows[order], cols[order], vals[order]


class QuadraticProgram:
    """Minimise ``sum_{i<j} Q_ij x_i x_j + sum_i Q_ii x_i`` over binary ``x``.

    ``quadratic`` is a mapping ``{(i, j): value}`` or an iterable of
    ``(i, j, value)`` triples with ``i != j``; each unordered pair may appear
    only once and zero values are dropped. Pairs are kept in canonical
    ``i < j`` lexicographic order, so evaluation does not depend on the
    order in which they were supplied.

    Instances are treated as immutable.
    """

    def __init__(self, n: int, quadratic=(), linear=None, constraints: Iterable[Constraint] = ()):
        n = int(n)
        if n < 0:
            raise ValueError("n must be non-negative")
        self.n = n
        if linear is None:
            linear = np.zeros(n)
        linear = np.array(linear, dtype=float).reshape(-1)
        if len(linear) != n:
            raise DimensionError(f"linear has length {len(linear)}, expected {n}")
        rows, cols, vals = _canonical_pairs(n, quadratic)
        self._init_arrays(linear, rows, cols, vals, tuple(constraints))

    def _init_arrays(self, linear, rows, cols, vals, constraints):
        for c in constraints:
            if len(c.support) and (c.support.min() < 0 or c.support.max() >= self.n):
                raise IndexError("constraint support out of range")
        for a in (linear, rows, cols, vals):
            a.flags.writeable = False
        self.linear = linear
        self.rows = rows
        self.cols = cols
        self.values = vals
        self.constraints = constraints
        sym = sp.coo_matrix(
            (np.concatenate([vals, vals]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
            shape=(self.n, self.n),
        ).tocsr()
        sym.sort_indices()
        self._sym = sym

    @classmethod
    def _from_canonical(cls, n, linear, rows, cols, vals, constraints=()) -> "QuadraticProgram":
        qp = cls.__new__(cls)
        qp.n = int(n)
        qp._init_arrays(np.array(linear, dtype=float), rows, cols, vals, tuple(constraints))
        return qp

    def with_linear(self, linear, constraints=None) -> "QuadraticProgram":
        """Copy sharing the quadratic part, with new linear terms (and constraints)."""
        linear = np.array(linear, dtype=float).reshape(-1)
        if len(linear) != self.n:
            raise DimensionError(f"linear has length {len(linear)}, expected {self.n}")
        qp = QuadraticProgram.__new__(QuadraticProgram)
        qp.n = self.n
        linear.flags.writeable = False
        qp.linear = linear
        qp.rows, qp.cols, qp.values = self.rows, self.cols, self.values
        qp.constraints = self.constraints if constraints is None else tuple(constraints)
        qp._sym = self._sym
        return qp

    @property
    def matrix(self) -> sp.csr_matrix:
        """Symmetric off-diagonal coupling matrix (zero diagonal)."""
        return self._sym

    @property
    def num_pairs(self) -> int:
        return len(self.values)

    @property
    def quadratic(self) -> dict[tuple[int, int], float]:
        return {(int(i), int(j)): float(v) for i, j, v in zip(self.rows, self.cols, self.values)}

    def coefficient(self, i: int, j: int) -> float:
        if i == j:
            return float(self.linear[i])
        a, b = (i, j) if i < j else (j, i)
        return float(self._sym[a, b])

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        start, stop = self._sym.indptr[i], self._sym.indptr[i + 1]
        return self._sym.indices[start:stop], self._sym.data[start:stop]

    def cardinality_constraints(self) -> list[Constraint]:
        return [c for c in self.constraints if c.kind.is_cardinality]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "quadratic": [[int(i), int(j), float(v)] for i, j, v in zip(self.rows, self.cols, self.values)],
            "linear": [float(v) for v in self.linear],
            "constraints": [c.to_dict() for c in self.constraints],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "QuadraticProgram":
        return cls(
            d["n"],
            [tuple(t) for t in d.get("quadratic", [])],
            d.get("linear"),
            [Constraint.from_dict(c) for c in d.get("constraints", [])],
        )

    def __eq__(self, other):
        if not isinstance(other, QuadraticProgram):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.linear, other.linear)
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.values, other.values)
            and self.constraints == other.constraints
        )

    def __repr__(self):
        return f"QuadraticProgram(n={self.n}, pairs={self.num_pairs}, constraints={len(self.constraints)})"


def as_assignment(qp: QuadraticProgram, x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1 or len(x) != qp.n:
        raise DimensionError(f"assignment has shape {x.shape}, expected ({qp.n},)")
    return x.astype(np.int8, copy=False)


def evaluate_cost(qp: QuadraticProgram, x) -> float:
    """Exact cost of ``x``; constraints are not checked."""
    x = as_assignment(qp, x).astype(float)
    quad = np.dot(qp.values, x[qp.rows] * x[qp.cols])
    return float(quad + np.dot(qp.linear, x))


def check_feasibility(qp: QuadraticProgram, x) -> list[int]:
    """Indices of the constraints violated by ``x``."""
    x = as_assignment(qp, x)
    return [idx for idx, c in enumerate(qp.constraints) if not c.holds(x)]


def local_fields(qp: QuadraticProgram, x) -> np.ndarray:
    """``Q_ii + sum_j Q_ij x_j`` for every ``i``."""
    x = as_assignment(qp, x).astype(float)
    return qp.linear + qp.matrix @ x


def flip_delta(qp: QuadraticProgram, x, i: int) -> float:
    x = as_assignment(qp, x)
    if not 0 <= i < qp.n:
        raise IndexError(f"variable {i} out of range for n={qp.n}")
    idx, vals = qp.neighbors(i)
    s = qp.linear[i] + float(np.dot(vals, x[idx]))
    return s if x[i] == 0 else -s


def dumps(qp: QuadraticProgram, **meta) -> str:
    d = qp.to_dict()
    if meta:
        d["meta"] = meta
    return json.dumps(d)


def load(path) -> QuadraticProgram:
    with open(path) as fh:
        return QuadraticProgram.from_dict(json.load(fh))


def load_with_meta(path) -> tuple[QuadraticProgram, dict]:
    with open(path) as fh:
        d = json.load(fh)
    return QuadraticProgram.from_dict(d), dict(d.get("meta", {}))


def save(qp: QuadraticProgram, path, **meta) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(qp, **meta))
