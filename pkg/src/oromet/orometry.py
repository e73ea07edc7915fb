"""Isolation and prominence on finite metric datasets.

Prominence is defined on a graph: a vertex's prominence is the smaller of its
height and its minimal descent, the least drop below its own height needed to
walk to another vertex of at least equal height. On a metric dataset the graph
is the threshold graph joining points at distance at most ``delta``; the
canonical choice of ``delta`` is the dataset's minimal threshold.

Three prominence routines are provided and must agree exactly:

* :func:`prominence_bruteforce` enumerates simple paths (tiny graphs only),
* :func:`prominence_bottleneck` runs a widest-path search from one vertex,
* :func:`prominence_all_sweep` handles every vertex in one union-find pass.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BelowThresholdError, OracleScaleExceeded, ValidationError
from .metric import MetricDataset, minimal_threshold

ORACLE_MAX_VERTICES = 12


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph with a height per vertex."""

    heights: np.ndarray
    adjacency: tuple[tuple[int, ...], ...]

    @classmethod
    def from_edges(cls, heights, edges) -> "Graph":
        n = len(heights)
        nbrs = [set() for _ in range(n)]
        for a, b in edges:
            if a == b:
                raise ValidationError(f"self-loop at vertex {a}")
            nbrs[a].add(b)
            nbrs[b].add(a)
        return cls(np.asarray(heights, dtype=float), tuple(tuple(sorted(s)) for s in nbrs))

    def __len__(self):
        return len(self.adjacency)

    def edges(self) -> list[tuple[int, int]]:
        return [(a, b) for a, nb in enumerate(self.adjacency) for b in nb if a < b]

    def degrees(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.adjacency], dtype=int)


@dataclass(frozen=True, eq=False)
class ThresholdGraph(Graph):
    dataset: Optional[MetricDataset] = None
    delta: float = 0.0


@dataclass(frozen=True, eq=False)
class OrometricScores:
    delta_used: float
    isolation: np.ndarray
    prominence: np.ndarray
    positive_prominence_count: int


def build_threshold_graph(ds: MetricDataset, delta: float) -> ThresholdGraph:
    """Join every pair of distinct points at distance at most ``delta``."""
    if not delta >= 0:
        raise ValidationError(f"delta must be >= 0, got {delta!r}")
    close = ds.matrix <= delta
    np.fill_diagonal(close, False)
    adjacency = tuple(tuple(np.flatnonzero(row).tolist()) for row in close)
    return ThresholdGraph(ds.heights, adjacency, dataset=ds, delta=float(delta))


def isolation_all(ds: MetricDataset) -> np.ndarray:
    """Distance to the nearest other point of at least equal height.

    A point without such a peer gets its largest distance to any point.
    """
    d = ds.matrix
    h = ds.heights
    peer = h[None, :] >= h[:, None]
    np.fill_diagonal(peer, False)
    nearest = np.where(peer, d, np.inf).min(axis=1)
    return np.where(peer.any(axis=1), nearest, d.max(axis=1))


def prominence_bruteforce(g: Graph, m: int, *, max_vertices: int = ORACLE_MAX_VERTICES) -> float:
    """Prominence of ``m`` by enumerating every simple path. Exponential; an oracle for tests."""
    if len(g) > max_vertices:
        raise OracleScaleExceeded(f"path enumeration refused for {len(g)} vertices (limit {max_vertices})")
    h = g.heights
    top = h[m]
    best = math.inf
    on_path = [False] * len(g)
    on_path[m] = True

    # Both cuts keep the result exact: extending a path past a target only
    # lowers its minimum, and a branch already descending by ``best`` or more
    # cannot improve on it.
    def walk(v, lowest):
        nonlocal best
        for w in g.adjacency[v]:
            if on_path[w]:
                continue
            low = min(lowest, h[w])
            if top - low >= best:
                continue
            if h[w] >= top:
                best = top - low
                continue
            on_path[w] = True
            walk(w, low)
            on_path[w] = False

    if _reachable_target(g, m):
        walk(m, top)
    return float(min(top, best))


def _reachable_target(g, m):
    top = g.heights[m]
    seen = {m}
    stack = [m]
    while stack:
        for w in g.adjacency[stack.pop()]:
            if w not in seen:
                if g.heights[w] >= top:
                    return True
                seen.add(w)
                stack.append(w)
    return False


def prominence_bottleneck(g: Graph, m: int) -> float:
    """Prominence of ``m`` via a widest-path search (max-heap on path minimum height)."""
    h = g.heights
    top = h[m]
    best = np.full(len(g), -np.inf)
    best[m] = top
    heap = [(-top, m)]
    done = [False] * len(g)
    while heap:
        neg, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u != m and h[u] >= top:
            return float(min(top, top - (-neg)))
        for w in g.adjacency[u]:
            b = min(-neg, h[w])
            if not done[w] and b > best[w]:
                best[w] = b
                heapq.heappush(heap, (-b, w))
    return float(top)


class _Components:
    """Union-find whose roots remember the component's summit."""

    def __init__(self, n):
        self.parent = list(range(n))
        self.size = [1] * n
        self.summit = list(range(n))

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b, summit):
        a, b = self.find(a), self.find(b)
        if a == b:
            return a
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        self.summit[a] = summit
        return a


def prominence_all_sweep(g: Graph) -> np.ndarray:
    """Prominence of every vertex in one descending-height union-find sweep.

    Vertices are activated from highest to lowest (ties by index). Activating
    ``v`` at level ``h[v]`` joins it to its active neighbours' components.
    Every summit that thereby first meets a vertex of at least its own height
    settles its minimal descent at ``h[summit] - h[v]``.
    """
    h = g.heights
    n = len(g)
    order = sorted(range(n), key=lambda i: (-h[i], i))
    rank = [0] * n
    for r, v in enumerate(order):
        rank[v] = r
    mindesc = [math.inf] * n
    active = [False] * n
    comps = _Components(n)
    for v in order:
        active[v] = True
        level = h[v]
        roots = {comps.find(u) for u in g.adjacency[v] if active[u]}
        if not roots:
            continue
        summits = [comps.summit[r] for r in roots]
        summits.append(v)
        winner = min(summits, key=rank.__getitem__)
        for s in summits:
            if s != winner and mindesc[s] == math.inf:
                mindesc[s] = h[s] - level
        if mindesc[winner] == math.inf and any(h[s] >= h[winner] for s in summits if s != winner):
            mindesc[winner] = h[winner] - level
        for r in roots:
            comps.union(v, r, winner)
        comps.summit[comps.find(v)] = winner
    return np.minimum(h, np.array(mindesc, dtype=float))


def enrich(ds: MetricDataset, delta: Optional[float] = None) -> OrometricScores:
    """Isolation and prominence for every point; ``delta`` defaults to the minimal threshold."""
    delta_m = minimal_threshold(ds)
    if delta is None:
        delta = delta_m
    elif delta < delta_m:
        raise BelowThresholdError(f"delta {delta} is below the minimal threshold {delta_m}")
    g = build_threshold_graph(ds, delta)
    iso = isolation_all(ds)
    prom = prominence_all_sweep(g)
    return OrometricScores(float(delta), iso, prom, int(np.count_nonzero(prom > 0)))


def prominence_monotonicity_probe(ds: MetricDataset, deltas: Sequence[float]) -> list[np.ndarray]:
    delta_m = minimal_threshold(ds)
    deltas = list(deltas)
    if any(b < a for a, b in zip(deltas, deltas[1:])):
        raise ValidationError(f"deltas must be ascending, got {deltas}")
    low = [d for d in deltas if d < delta_m]
    if low:
        raise BelowThresholdError(f"deltas {low} are below the minimal threshold {delta_m}")
    return [prominence_all_sweep(build_threshold_graph(ds, d)) for d in deltas]
