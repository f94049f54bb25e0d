"""Benchmark instances: MaxCut graphs (synthetic blobs, Gset) and antenna placement."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .qp import Constraint, DimensionError, QuadraticProgram


class GsetParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    node_count: int
    i: np.ndarray
    j: np.ndarray
    w: np.ndarray

    @classmethod
    def from_edges(cls, n: int, edges) -> "WeightedGraph":
        seen = set()
        ii, jj, ww = [], [], []
        for a, b, w in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop at {a}")
            if not (0 <= a < n and 0 <= b < n):
                raise IndexError(f"edge ({a},{b}) out of range")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            ii.append(key[0])
            jj.append(key[1])
            ww.append(float(w))
        return cls(n, np.array(ii, dtype=np.int64), np.array(jj, dtype=np.int64), np.array(ww, dtype=float))

    @property
    def edge_count(self) -> int:
        return len(self.w)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(c)) for a, b, c in zip(self.i, self.j, self.w)]


def generate_blob_graph(n: int, blob_count: int, std: float, threshold: float, seed: int,
                        spread: float = 10.0) -> WeightedGraph:
    """Unit-weight proximity graph over Gaussian point clouds.

    Blob centres sit evenly on a circle of radius ``spread * std``; points are
    split across blobs as evenly as possible and joined when their distance
    is strictly below ``threshold``.
    """
    if not (n >= blob_count >= 1) or std <= 0 or threshold <= 0:
        raise ValueError("need n >= blob_count >= 1 and positive std, threshold")
    pts = blob_points(n, blob_count, std, seed, spread)
    tree = cKDTree(pts)
    pairs = tree.query_pairs(threshold, output_type="ndarray") if np.isfinite(threshold) else None
    if pairs is None:
        ii, jj = np.triu_indices(n, k=1)
    else:
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
        d = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
        pairs = pairs[d < threshold]
        ii, jj = pairs[:, 0], pairs[:, 1]
    return WeightedGraph(n, ii.astype(np.int64), jj.astype(np.int64), np.ones(len(ii)))


def blob_points(n: int, blob_count: int, std: float, seed: int, spread: float = 10.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    counts = [n // blob_count + (1 if b < n % blob_count else 0) for b in range(blob_count)]
    chunks = []
    for b, c in enumerate(counts):
        angle = 2.0 * math.pi * b / blob_count
        centre = spread * std * np.array([math.cos(angle), math.sin(angle)])
        chunks.append(centre + std * rng.standard_normal((c, 2)))
    return np.vstack(chunks)


def maxcut_to_qubo(g: WeightedGraph) -> QuadraticProgram:
    """Minimisation form whose cost is minus the cut weight."""
    lin = np.zeros(g.node_count)
    np.subtract.at(lin, g.i, g.w)
    np.subtract.at(lin, g.j, g.w)
    quad = {(int(a), int(b)): 2.0 * float(w) for a, b, w in zip(g.i, g.j, g.w)}
    return QuadraticProgram(g.node_count, quad, lin)


def cut_value(g: WeightedGraph, x) -> float:
    x = np.asarray(x)
    if x.ndim != 1 or len(x) != g.node_count:
        raise DimensionError(f"assignment has shape {x.shape}, expected ({g.node_count},)")
    return float(g.w[x[g.i] != x[g.j]].sum())


def parse_gset(text: str) -> WeightedGraph:
    """Parse the Gset format: ``n m`` header, then ``i j w`` lines (1-based)."""
    lines = [(no, ln.split()) for no, ln in enumerate(text.splitlines(), start=1)]
    lines = [(no, tok) for no, tok in lines if tok]
    if not lines:
        raise GsetParseError(1, "empty input")
    no, head = lines[0]
    if len(head) != 2:
        raise GsetParseError(no, "header must be 'n m'")
    try:
        n, m = int(head[0]), int(head[1])
    except ValueError:
        raise GsetParseError(no, "header must hold two integers") from None
    if n < 0 or m < 0:
        raise GsetParseError(no, "negative size in header")
    body = lines[1:]
    if len(body) != m:
        raise GsetParseError(body[-1][0] if body else no, f"expected {m} edge lines, found {len(body)}")
    seen = set()
    ii = np.empty(m, dtype=np.int64)
    jj = np.empty(m, dtype=np.int64)
    ww = np.empty(m)
    for e, (no, tok) in enumerate(body):
        if len(tok) != 3:
            raise GsetParseError(no, "edge line must be 'i j w'")
        try:
            a, b, w = int(tok[0]), int(tok[1]), float(tok[2])
        except ValueError:
            raise GsetParseError(no, "malformed edge") from None
        if not (1 <= a <= n and 1 <= b <= n):
            raise GsetParseError(no, f"node index out of range 1..{n}")
        if a == b:
            raise GsetParseError(no, "self-loop")
        key = (min(a, b) - 1, max(a, b) - 1)
        if key in seen:
            raise GsetParseError(no, f"duplicate edge {a} {b}")
        seen.add(key)
        ii[e], jj[e], ww[e] = key[0], key[1], w
    return WeightedGraph(n, ii, jj, ww)


def read_gset(path) -> WeightedGraph:
    with open(path) as fh:
        return parse_gset(fh.read())


@dataclass(frozen=True, eq=False)
class AppInstance:
    """Antenna placement: candidate sites, devices, coverage radius, antenna count.

    ``coverage[i]`` counts devices within ``radius`` of site ``i``;
    ``overlap[(i, j)]`` counts devices covered by both sites, kept only when
    positive.
    """

    sites: np.ndarray
    devices: np.ndarray
    radius: float
    v: int
    coverage: np.ndarray = field(init=False)
    overlap: dict = field(init=False)

    def __post_init__(self):
        sites = np.asarray(self.sites, dtype=float).reshape(-1, 2)
        devices = np.asarray(self.devices, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "devices", devices)
        if not 0 <= self.v <= len(sites):
            raise ValueError(f"v={self.v} outside [0, {len(sites)}]")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        covered = _coverage_sets(sites, devices, self.radius)
        object.__setattr__(self, "coverage", np.array([len(c) for c in covered], dtype=np.int64))
        overlap = {}
        for a in range(len(sites)):
            for b in range(a + 1, len(sites)):
                common = len(covered[a] & covered[b])
                if common:
                    overlap[(a, b)] = common
        object.__setattr__(self, "overlap", overlap)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def to_dict(self) -> dict:
        return {
            "sites": self.sites.tolist(),
            "devices": self.devices.tolist(),
            "radius": self.radius,
            "v": int(self.v),
            "coverage": self.coverage.tolist(),
            "overlap": [[a, b, c] for (a, b), c in sorted(self.overlap.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AppInstance":
        return cls(np.array(d["sites"]), np.array(d["devices"]), float(d["radius"]), int(d["v"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _coverage_sets(sites, devices, radius) -> list[set]:
    if len(devices) == 0 or len(sites) == 0:
        return [set() for _ in range(len(sites))]
    tree = cKDTree(devices)
    out = []
    for s, hits in zip(sites, tree.query_ball_point(sites, radius)):
        hits = np.asarray(hits, dtype=np.int64)
        if len(hits):
            d = np.linalg.norm(devices[hits] - s, axis=1)
            hits = hits[d <= radius]
        out.append(set(int(h) for h in hits))
    return out


def generate_app(n_sites: int, n_devices: int | None, v: int, radius: float, box_km: float = 100.0,
                 seed: int = 0) -> AppInstance:
    """Sites and devices uniform in a ``box_km`` square; ``n_devices`` defaults to ``20 * n_sites``."""
    if n_sites < 1 or box_km <= 0 or radius <= 0 or not 0 <= v <= n_sites:
        raise ValueError("degenerate APP parameters")
    if n_devices is None:
        n_devices = 20 * n_sites
    rng = np.random.default_rng(seed)
    sites = rng.uniform(0.0, box_km, size=(n_sites, 2))
    devices = rng.uniform(0.0, box_km, size=(n_devices, 2))
    return AppInstance(sites, devices, float(radius), int(v))


def scale_radius(radius_base: float, n: int, n_base: int) -> float:
    if radius_base <= 0 or n <= 0 or n_base <= 0:
        raise ValueError("all arguments must be positive")
    return radius_base * math.sqrt(n_base / n)


def app_to_qubo(inst: AppInstance) -> QuadraticProgram:
    """Overlap penalties, quarter-coverage rewards, exactly ``v`` antennas."""
    lin = -inst.coverage.astype(float) / 4.0
    cons = [Constraint.cardinality(np.arange(inst.n_sites), inst.v)]
    return QuadraticProgram(inst.n_sites, {k: float(c) for k, c in inst.overlap.items()}, lin, cons)
