"""Quotient graphs of congruence towers, Folner data and metric utilities."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .groups import Element, TowerSpec

log = logging.getLogger(__name__)

DEFAULT_VERTEX_CAP = 1 << 20


class TowerSizeError(ValueError):
    """Requested quotient exceeds the configured vertex cap."""


@dataclass(frozen=True)
class FolnerData:
    index: int
    elements: tuple[Element, ...]
    boundary: tuple[Element, ...]

    @property
    def ratio(self) -> float:
        return len(self.boundary) / len(self.elements)


class QuotientGraph:
    """Finite quotient X_m of the Cayley graph by the level-m congruence
    subgroup.

    Vertices are canonically indexed by fundamental-domain coordinates
    (residues mod k**m in mixed-radix order), so covering maps between levels
    are plain coordinate reductions. Oriented edges carry generator labels;
    loops and multi-edges are kept. Immutable after construction.
    """

    def __init__(self, spec: TowerSpec, level: int, vertex_cap: int = DEFAULT_VERTEX_CAP):
        if level < 1:
            raise ValueError("level must be >= 1")
        n = spec.quotient_order(level)
        if n > vertex_cap:
            raise TowerSizeError(f"quotient has {n} vertices, cap is {vertex_cap}")
        self.spec = spec
        self.level = level
        self.n = n
        self.reps: list[Element] = list(spec.quotient_elements(level))
        self.index: dict[Element, int] = {v: j for j, v in enumerate(self.reps)}
        self.origin = self.index[spec.reduce(spec.identity(), level)]
        self.labels = [label for label, _ in spec.generators()]
        self._gen_elems = dict(spec.generators())
        edges = []
        for x, v in enumerate(self.reps):
            for label, s in spec.generators():
                # one oriented edge per (vertex, generator); reversal is built in
                t = self.index[spec.reduce(spec.mul(v, s), level)]
                edges.append((x, t, label))
        self.edges: list[tuple[int, int, str]] = edges
        self._dist0 = self._bfs_from(self.origin)
        self.diameter = int(self._dist0.max())

    # -- structure -----------------------------------------------------------

    def vertex(self, rep: Element) -> int:
        return self.index[self.spec.reduce(rep, self.level)]

    def reverse_edge(self, e: tuple[int, int, str]) -> tuple[int, int, str]:
        x, t, label = e
        return (t, x, self.spec.inverse_label(label))

    def out_edges(self, x: int) -> list[tuple[int, int, str]]:
        k = len(self.labels)
        return self.edges[x * k : (x + 1) * k]

    def origin_edges(self) -> list[tuple[int, int, str]]:
        """Fundamental domain E0 for the action on oriented edges: the
        out-edges at the origin, one per orbit."""
        return self.out_edges(self.origin)

    def exchange_edges(self) -> list[tuple[int, int, str]]:
        """Oriented edges of the quotient as a simple graph: loops dropped and
        parallel labelled edges (which occur on degenerate small quotients,
        e.g. both generators of a cycle of 2 joining the same pair) kept once.
        This is the edge set the exclusion generator and Dirichlet forms sum
        over; `edges` remains the full labelled list."""
        seen: set[tuple[int, int]] = set()
        out = []
        for e in self.edges:
            x, y, _ = e
            if x == y or (x, y) in seen:
                continue
            seen.add((x, y))
            out.append(e)
        return out

    def origin_exchange_edges(self) -> list[tuple[int, int, str]]:
        """E0 restricted to the simple-graph edge set: exchange out-edges at
        the origin."""
        return [e for e in self.exchange_edges() if e[0] == self.origin]

    def action_permutation(self, sigma: Element) -> np.ndarray:
        """Vertex permutation of left multiplication by sigma (any lift)."""
        spec = self.spec
        perm = np.empty(self.n, dtype=np.int64)
        for x, v in enumerate(self.reps):
            perm[x] = self.index[spec.reduce(spec.mul(sigma, v), self.level)]
        return perm

    def covering_index(self, lower: "QuotientGraph") -> np.ndarray:
        """Vertex map of the covering X_self -> X_lower (coordinate reduction)."""
        if lower.spec != self.spec or lower.level > self.level:
            raise ValueError("not a lower level of the same tower")
        out = np.empty(self.n, dtype=np.int64)
        for x, v in enumerate(self.reps):
            out[x] = lower.index[self.spec.reduce(v, lower.level)]
        return out

    # -- metric --------------------------------------------------------------

    def _bfs_from(self, x: int) -> np.ndarray:
        dist = np.full(self.n, -1, dtype=np.int64)
        dist[x] = 0
        frontier = [x]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for v in frontier:
                for _, t, _ in self.out_edges(v):
                    if dist[t] < 0:
                        dist[t] = d
                        nxt.append(t)
            frontier = nxt
        return dist

    def distance(self, x: int, y: int) -> int:
        # left-invariance: d(x, y) = d(o, x^{-1} y)
        spec = self.spec
        g = spec.reduce(spec.mul(spec.inv(self.reps[x]), self.reps[y]), self.level)
        return int(self._dist0[self.index[g]])

    def dist_from_origin(self) -> np.ndarray:
        return self._dist0.copy()

    def export_edge_list(self, path) -> None:
        with open(path, "w") as fh:
            for x, t, label in self.edges:
                fh.write(f"{x} {t} {label}\n")


def build_tower(spec: TowerSpec, depth: int, vertex_cap: int = DEFAULT_VERTEX_CAP) -> list[QuotientGraph]:
    """Quotient graphs for levels 1..depth, with covering maps validated."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    graphs = [QuotientGraph(spec, m, vertex_cap) for m in range(1, depth + 1)]
    for lo, hi in zip(graphs, graphs[1:]):
        _validate_covering(hi, lo)
    return graphs


def _validate_covering(upper: QuotientGraph, lower: QuotientGraph) -> None:
    pi = upper.covering_index(lower)
    if len(set(pi.tolist())) != lower.n:
        raise AssertionError("covering map is not surjective on vertices")
    lower_edges = set(lower.edges)
    for x, t, label in upper.edges:
        if (int(pi[x]), int(pi[t]), label) not in lower_edges:
            raise AssertionError("covering map does not send edges to edges")


def folner_set(spec: TowerSpec, i: int) -> FolnerData:
    """F_i with its exact outer boundary F_i S \\ F_i."""
    elements = spec.folner_elements(i)
    fs = set(elements)
    boundary = set()
    for g in elements:
        for _, s in spec.generators():
            h = spec.mul(g, s)
            if h not in fs:
                boundary.add(h)
    return FolnerData(index=i, elements=tuple(elements), boundary=tuple(sorted(boundary)))


def max_folner_norm(spec: TowerSpec, i: int) -> int:
    if spec.family == "integer_lattice":
        return spec.d * i
    return max(spec.word_norm(g) for g in spec.folner_elements(i))


def b_index(spec: TowerSpec, K: float) -> int:
    """Largest i with F_i contained in the word-metric ball of radius K.

    Clamped to 1 when even F_1 does not fit (K too small); the clamp keeps
    downstream formulas total and is logged as a warning.
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    i = 0
    while max_folner_norm(spec, i + 1) <= K:
        i += 1
    if i == 0:
        key = (spec, round(K, 9))
        if key not in _b_index_warned:
            _b_index_warned.add(key)
            log.warning("b_index clamp: F_1 not contained in B(o, %g), returning 1", K)
        return 1
    return i


_b_index_warned: set = set()


def ball(graph: QuotientGraph, x: int, r: int) -> list[int]:
    """Vertices of the quotient graph within graph distance r of x."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    dist = graph._bfs_from(x)
    return [v for v in range(graph.n) if 0 <= dist[v] <= r]


def ball_infinite(spec: TowerSpec, r: int) -> list[Element]:
    """B(o, r) in the infinite Cayley graph, canonical BFS order."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    return spec.ball(r)


def injectivity_radius(graph: QuotientGraph) -> int:
    """Largest r such that the covering X -> X_m is injective on every
    r-ball; by vertex transitivity it suffices to compare ball sizes at o."""
    r = 0
    while True:
        infinite = len(graph.spec.ball(r + 1))
        finite = len(ball(graph, graph.origin, r + 1))
        if finite != infinite:
            return r
        r += 1


def default_time_scale(graph: QuotientGraph) -> float:
    """Diffusive schedule t_m = diam(X_m)**2 (satisfies sqrt(t_m) <= 2 diam)."""
    return float(graph.diameter) ** 2
