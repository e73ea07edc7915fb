"""Randomized self-checks for the prominence routines, shared by the CLI and tests."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .metric import MetricDataset, minimal_threshold
from .orometry import (
    Graph,
    build_threshold_graph,
    enrich,
    prominence_all_sweep,
    prominence_bottleneck,
    prominence_bruteforce,
    prominence_monotonicity_probe,
)


@dataclass
class CheckSummary:
    name: str
    trials: int
    mismatches: int = 0
    first_failure: str = ""

    @property
    def ok(self) -> bool:
        return self.mismatches == 0

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        text = f"{status} {self.name}: {self.trials} trials, {self.mismatches} mismatches"
        return text + (f" (first: {self.first_failure})" if self.first_failure else "")


def random_dataset(rng: np.random.Generator, n: int, max_height: int = 9) -> MetricDataset:
    """Points uniform in the unit square, integer heights in [0, max_height]."""
    pts = rng.random((n, 2))
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1))
    d = np.triu(d, 1)
    return MetricDataset.from_matrix(rng.integers(0, max_height + 1, n).astype(float), d + d.T)


def random_delta(rng: np.random.Generator, ds: MetricDataset) -> float:
    """A threshold between the minimal threshold and the diameter, sometimes exactly the minimum."""
    lo, hi = minimal_threshold(ds), float(ds.matrix.max())
    return lo if rng.random() < 0.25 else float(rng.uniform(lo, hi))


def random_connected_graph(rng: np.random.Generator, n: int, extra: float = 0.15, max_height: int = 9) -> Graph:
    """Random spanning tree plus each remaining pair with probability ``extra``."""
    order = rng.permutation(n)
    edges = {tuple(sorted((int(order[i]), int(order[rng.integers(0, i)])))) for i in range(1, n)}
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < extra:
                edges.add((a, b))
    return Graph.from_edges(rng.integers(0, max_height + 1, n).astype(float), sorted(edges))


def shortest_path_metric(g: Graph) -> np.ndarray:
    n = len(g)
    d = np.full((n, n), np.inf)
    for s in range(n):
        d[s, s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for w in g.adjacency[u]:
                if d[s, w] == np.inf:
                    d[s, w] = d[s, u] + 1
                    queue.append(w)
    return d


def check_oracle_equivalence(trials: int, n: int, seed: int) -> CheckSummary:
    rng = np.random.default_rng(seed)
    out = CheckSummary("oracle equivalence", trials)
    for t in range(trials):
        ds = random_dataset(rng, int(rng.integers(2, n + 1)))
        g = build_threshold_graph(ds, random_delta(rng, ds))
        brute = [prominence_bruteforce(g, m) for m in range(len(g))]
        bott = [prominence_bottleneck(g, m) for m in range(len(g))]
        sweep = prominence_all_sweep(g).tolist()
        if not brute == bott == sweep:
            out.mismatches += 1
            out.first_failure = out.first_failure or f"trial {t}: {brute} / {bott} / {sweep}"
    return out


def check_lemma_coincidence(trials: int, n: int, seed: int) -> CheckSummary:
    rng = np.random.default_rng(seed)
    out = CheckSummary("graph coincidence", trials)
    for t in range(trials):
        g = random_connected_graph(rng, int(rng.integers(2, n + 1)))
        direct = [prominence_bruteforce(g, m, max_vertices=len(g)) for m in range(len(g))]
        ds = MetricDataset.from_matrix(g.heights, shortest_path_metric(g))
        via_metric = enrich(ds).prominence.tolist()
        if direct != via_metric:
            out.mismatches += 1
            out.first_failure = out.first_failure or f"trial {t}: {direct} vs {via_metric}"
    return out


def check_monotonicity(trials: int, n: int, seed: int) -> CheckSummary:
    rng = np.random.default_rng(seed)
    out = CheckSummary("delta monotonicity", trials)
    for t in range(trials):
        ds = random_dataset(rng, int(rng.integers(2, n + 1)))
        d1, d2 = sorted((random_delta(rng, ds), random_delta(rng, ds)))
        p1, p2 = prominence_monotonicity_probe(ds, [d1, d2])
        if np.any(p2 > p1):
            out.mismatches += 1
            out.first_failure = out.first_failure or f"trial {t}: {p1.tolist()} -> {p2.tolist()}"
    return out
