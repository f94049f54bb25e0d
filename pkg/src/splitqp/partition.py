"""Interaction graph of a quadratic program and K-way partitioning."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .qp import QuadraticProgram

DENSE_NODE_LIMIT = 4000


class PartitionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class InteractionGraph:
    """Undirected graph with ``|Q_ij|`` edge weights, stored as symmetric CSR."""

    node_count: int
    adjacency_matrix: sp.csr_matrix

    def neighbors(self, i: int) -> list[tuple[int, float]]:
        a = self.adjacency_matrix
        start, stop = a.indptr[i], a.indptr[i + 1]
        return [(int(j), float(w)) for j, w in zip(a.indices[start:stop], a.data[start:stop])]

    @property
    def adjacency(self) -> list[list[tuple[int, float]]]:
        return [self.neighbors(i) for i in range(self.node_count)]

    @property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency_matrix.sum(axis=1)).ravel()

    @property
    def total_weight(self) -> float:
        return float(self.adjacency_matrix.sum()) / 2.0

    @classmethod
    def from_edges(cls, n: int, edges) -> "InteractionGraph":
        edges = list(edges)
        if not edges:
            return cls(n, sp.csr_matrix((n, n)))
        i, j, w = (np.asarray(c) for c in zip(*edges))
        w = np.abs(w.astype(float))
        m = sp.coo_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n)).tocsr()
        m.sort_indices()
        return cls(n, m)


@dataclass(frozen=True, eq=False)
class Partition:
    k: int
    assignment: np.ndarray
    members: tuple[np.ndarray, ...]

    @classmethod
    def from_labels(cls, labels, k: int | None = None) -> "Partition":
        """Build from per-node part indices; parts must all be non-empty."""
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if k is None:
            k = int(labels.max()) + 1 if len(labels) else 0
        if len(labels) and (labels.min() < 0 or labels.max() >= k):
            raise PartitionError("part index out of range")
        members = tuple(np.flatnonzero(labels == p) for p in range(k))
        if any(len(m) == 0 for m in members):
            raise PartitionError("every part must be non-empty")
        labels.flags.writeable = False
        for m in members:
            m.flags.writeable = False
        return cls(k, labels, members)

    @property
    def n(self) -> int:
        return len(self.assignment)

    @property
    def sizes(self) -> list[int]:
        return [len(m) for m in self.members]

    def to_json(self) -> str:
        return json.dumps([int(v) for v in self.assignment])

    @classmethod
    def from_json(cls, text: str) -> "Partition":
        return cls.from_labels(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.assignment, other.assignment)

    def __repr__(self):
        return f"Partition(k={self.k}, sizes={self.sizes})"


def build_graph(qp: QuadraticProgram) -> InteractionGraph:
    m = abs(qp.matrix).tocsr()
    m.eliminate_zeros()
    m.sort_indices()
    return InteractionGraph(qp.n, m)


def cut_weight(g: InteractionGraph, p: Partition) -> float:
    coo = sp.triu(g.adjacency_matrix, k=1).tocoo()
    crossing = p.assignment[coo.row] != p.assignment[coo.col]
    return float(coo.data[crossing].sum())


def _check_k(g: InteractionGraph, k: int) -> None:
    if not 1 <= k <= g.node_count:
        raise PartitionError(f"k={k} outside [1, {g.node_count}]")


def _kmeans_pp_init(points, k, rng):
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[c] = points[idx]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def _sq_dists(points, centers):
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def kmeans(points: np.ndarray, k: int, seed: int, n_init: int = 10, max_iter: int = 300):
    """Lloyd's algorithm with k-means++ seeding; returns ``(labels, inertia)``.

    Empty clusters are refilled with the point farthest from its centroid.
    The best of ``n_init`` seeded restarts is kept.
    """
    rng = np.random.default_rng(seed)
    n = len(points)
    best_labels, best_inertia = None, np.inf
    for _ in range(n_init):
        centers = _kmeans_pp_init(points, k, rng)
        labels = np.full(n, -1)
        for _ in range(max_iter):
            d = _sq_dists(points, centers)
            new_labels = d.argmin(axis=1)
            counts = np.bincount(new_labels, minlength=k)
            for empty in np.flatnonzero(counts == 0):
                own = d[np.arange(n), new_labels]
                movable = counts[new_labels] > 1
                if not movable.any():
                    break
                far = int(np.argmax(np.where(movable, own, -np.inf)))
                counts[new_labels[far]] -= 1
                new_labels[far] = empty
                counts[empty] = 1
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
            for c in range(k):
                centers[c] = points[labels == c].mean(axis=0)
        inertia = float(((points - centers[labels]) ** 2).sum())
        if inertia < best_inertia - 1e-12:
            best_labels, best_inertia = labels.copy(), inertia
    return best_labels, best_inertia


def spectral_embedding(g: InteractionGraph, k: int) -> np.ndarray:
    """Row-normalised eigenvectors of the k smallest eigenvalues of the
    symmetric normalised Laplacian. Isolated nodes get zero rows."""
    w = g.adjacency_matrix.toarray()
    deg = w.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    # isolated nodes would add spurious zero eigenvalues; solve on the rest
    active = np.flatnonzero(nz)
    emb = np.zeros((g.node_count, k))
    if len(active):
        s = inv_sqrt[active]
        sub = np.eye(len(active)) - s[:, None] * w[np.ix_(active, active)] * s[None, :]
        _, vecs = np.linalg.eigh(sub)
        take = min(k, len(active))
        emb[active, :take] = vecs[:, :take]
    norms = np.linalg.norm(emb, axis=1)
    emb[norms > 0] /= norms[norms > 0, None]
    return emb


def partition_spectral(g: InteractionGraph, k: int, seed: int = 0, dense_limit: int = DENSE_NODE_LIMIT) -> Partition:
    _check_k(g, k)
    if g.node_count > dense_limit:
        raise PartitionError(
            f"{g.node_count} nodes exceeds the dense eigensolver limit {dense_limit}; use partition_greedy"
        )
    n = g.node_count
    if k == 1:
        return Partition.from_labels(np.zeros(n, dtype=np.int64), 1)
    active = np.flatnonzero(g.degrees > 0)
    labels = np.full(n, -1, dtype=np.int64)
    k_active = min(k, len(active))
    if k_active > 0:
        emb = spectral_embedding(g, k)[active]
        if k_active == len(active):
            labels[active] = np.arange(k_active)
        else:
            labels[active], _ = kmeans(emb, k_active, seed)
    sizes = np.bincount(labels[active], minlength=k)
    for i in np.flatnonzero(labels < 0):
        smallest = int(np.argmin(sizes))
        labels[i] = smallest
        sizes[smallest] += 1
    return Partition.from_labels(labels, k)


def _label_propagation(g: InteractionGraph, cap: int, rng, max_rounds: int = 20) -> np.ndarray:
    n = g.node_count
    a = g.adjacency_matrix
    labels = np.arange(n)
    sizes = np.ones(n, dtype=np.int64)
    for _ in range(max_rounds):
        moved = 0
        for v in rng.permutation(n):
            start, stop = a.indptr[v], a.indptr[v + 1]
            if start == stop:
                continue
            weights: dict[int, float] = {}
            for u, w in zip(a.indices[start:stop], a.data[start:stop]):
                lu = labels[u]
                weights[lu] = weights.get(lu, 0.0) + w
            own = labels[v]
            best, best_w = own, weights.get(own, 0.0)
            for lab in sorted(weights):
                if lab == own or sizes[lab] + 1 > cap:
                    continue
                if weights[lab] > best_w:
                    best, best_w = lab, weights[lab]
            if best != own:
                sizes[own] -= 1
                sizes[best] += 1
                labels[v] = best
                moved += 1
        if not moved:
            break
    _, labels = np.unique(labels, return_inverse=True)
    return labels


def _cluster_order(g: InteractionGraph, labels: np.ndarray) -> list[int]:
    """Traverse the quotient graph breadth-first, one component at a time,
    starting each component from a pseudo-peripheral cluster."""
    c = int(labels.max()) + 1
    coo = g.adjacency_matrix.tocoo()
    q = sp.coo_matrix((coo.data, (labels[coo.row], labels[coo.col])), shape=(c, c)).tocsr()
    q.setdiag(0)
    q.eliminate_zeros()

    def bfs(root, visited):
        order, seen = [], {root}
        queue = deque([root])
        while queue:
            u = queue.popleft()
            order.append(u)
            start, stop = q.indptr[u], q.indptr[u + 1]
            nbrs = sorted(zip(-q.data[start:stop], q.indices[start:stop]))
            for _, v in nbrs:
                if v not in seen and not visited[v]:
                    seen.add(v)
                    queue.append(v)
        return order

    visited = np.zeros(c, dtype=bool)
    sequence = []
    for root in range(c):
        if visited[root]:
            continue
        far = bfs(root, visited)[-1]
        comp = bfs(far, visited)
        visited[comp] = True
        sequence.extend(comp)
    return sequence


def partition_greedy(g: InteractionGraph, k: int, seed: int = 0) -> Partition:
    """Size-capped label propagation, then balanced merging of the coarse
    clusters into exactly ``k`` parts.

    Coarse clusters hold at most ``n / 2k`` nodes. They are laid out in a
    breadth-first order of the cluster graph and the sequence is cut into
    ``k`` contiguous runs at the boundaries nearest to multiples of ``n/k``,
    which keeps parts within ``[n/2k, 3n/2k]`` in size.
    """
    _check_k(g, k)
    n = g.node_count
    if k == 1:
        return Partition.from_labels(np.zeros(n, dtype=np.int64), 1)
    rng = np.random.default_rng(seed)
    cap = max(1, n // (2 * k))
    coarse = _label_propagation(g, cap, rng) if cap > 1 else np.arange(n)
    order = _cluster_order(g, coarse)
    sizes = np.bincount(coarse)[order]
    bounds = np.concatenate([[0], np.cumsum(sizes)])

    cuts = [0]
    for part in range(1, k):
        target = part * n / k
        lo = cuts[-1] + 1
        hi = len(order) - (k - part)
        pos = lo + int(np.argmin(np.abs(bounds[lo : hi + 1] - target)))
        cuts.append(pos)
    cuts.append(len(order))

    part_of_cluster = np.empty(len(order), dtype=np.int64)
    for part in range(k):
        for idx in range(cuts[part], cuts[part + 1]):
            part_of_cluster[order[idx]] = part
    labels = _refine(g, part_of_cluster[coarse], k)
    return Partition.from_labels(labels, k)


def _refine(g: InteractionGraph, labels: np.ndarray, k: int, max_passes: int = 10) -> np.ndarray:
    """Move single nodes to the neighbouring part that most reduces the cut,
    keeping every part size inside the band the merge step guarantees."""
    n = g.node_count
    lower = max(1, -(-n // (2 * k)))
    upper = max(lower, (3 * n) // (2 * k))
    labels = labels.copy()
    sizes = np.bincount(labels, minlength=k)
    lower = min(lower, int(sizes.min()))
    upper = max(upper, int(sizes.max()))
    a = g.adjacency_matrix
    for _ in range(max_passes):
        moved = 0
        for v in range(n):
            start, stop = a.indptr[v], a.indptr[v + 1]
            if start == stop:
                continue
            own = labels[v]
            if sizes[own] - 1 < lower:
                continue
            conn = np.bincount(labels[a.indices[start:stop]], weights=a.data[start:stop], minlength=k)
            gain = conn - conn[own]
            gain[own] = 0.0
            gain[sizes + 1 > upper] = 0.0
            best = int(np.argmax(gain))
            if gain[best] > 1e-12:
                labels[v] = best
                sizes[own] -= 1
                sizes[best] += 1
                moved += 1
        if not moved:
            break
    return labels
