"""Quotient graphs, covering maps, metric quantities, Folner data."""

import math

import networkx as nx
import numpy as np
import pytest

from towersep.groups import TowerSpec
from towersep.towers import (
    QuotientGraph,
    TowerSizeError,
    b_index,
    ball,
    ball_infinite,
    build_tower,
    default_time_scale,
    folner_set,
    injectivity_radius,
    max_folner_norm,
)

Z1 = TowerSpec("integer_lattice", d=1, k=2)
Z2 = TowerSpec("integer_lattice", d=2, k=2)
H = TowerSpec("heisenberg", k=2)


def to_networkx(graph: QuotientGraph) -> nx.MultiDiGraph:
    g = nx.MultiDiGraph()
    g.add_nodes_from(range(graph.n))
    for x, y, label in graph.edges:
        g.add_edge(x, y, label=label)
    return g


def test_tower_sizes_cycles():
    tower = build_tower(Z1, 3)
    assert [g.n for g in tower] == [2, 4, 8]


def test_heisenberg_level1_size_bruteforce():
    # oracle: enumerate upper-triangular matrices over Z/2Z by brute force
    mats = set()
    for a in range(2):
        for b in range(2):
            for c in range(2):
                mats.add((a, b, c))
    tower = build_tower(H, 2)
    assert tower[0].n == len(mats) == 8
    assert tower[1].n == 64


def test_covering_maps_validated_and_consistent():
    tower = build_tower(Z1, 3)
    up, lo = tower[2], tower[1]
    idx = up.covering_index(lo)
    # every lower vertex has exactly index-ratio preimages
    counts = np.bincount(idx, minlength=lo.n)
    assert set(counts.tolist()) == {up.n // lo.n}
    # edges map to edges with the same label
    lookup = {(x, lbl): y for x, y, lbl in lo.edges}
    for x, y, lbl in up.edges:
        assert lookup[(int(idx[x]), lbl)] == int(idx[y])


def test_vertex_cap():
    with pytest.raises(TowerSizeError):
        build_tower(Z2, 12, vertex_cap=1000)


def test_diameter_vs_networkx():
    for g in build_tower(Z1, 3) + build_tower(Z2, 2) + build_tower(H, 1):
        nxg = to_networkx(g).to_undirected()
        assert g.diameter == nx.diameter(nxg)


def test_distance_vs_networkx():
    g = build_tower(Z2, 2)[1]
    nxg = to_networkx(g).to_undirected()
    lengths = dict(nx.all_pairs_shortest_path_length(nxg))
    rng = np.random.default_rng(0)
    for _ in range(30):
        x, y = rng.integers(0, g.n, 2)
        assert g.distance(int(x), int(y)) == lengths[int(x)][int(y)]


def test_ball_sizes():
    g8 = build_tower(Z1, 3)[2]
    assert len(ball(g8, g8.origin, 2)) == 5
    assert len(ball_infinite(Z2, 2)) == 13


def test_folner_ratios_closed_form():
    for i in range(1, 6):
        f = folner_set(Z1, i)
        assert len(f.elements) == 2 * i + 1
        assert f.ratio == 2 / (2 * i + 1)
        f2 = folner_set(Z2, i)
        assert len(f2.elements) == (2 * i + 1) ** 2
        assert abs(f2.ratio - 4 / (2 * i + 1)) < 1e-15


def test_folner_boundary_direct_set_oracle():
    # oracle: direct computation of F_i S \ F_i
    for spec, i in ((Z1, 3), (Z2, 2)):
        f = folner_set(spec, i)
        fol = set(f.elements)
        boundary = set()
        for g in fol:
            for _, s in spec.generators():
                h = spec.mul(g, s)
                if h not in fol:
                    boundary.add(h)
        assert f.ratio == len(boundary) / len(fol)


def test_heisenberg_folner_ratio_decreases():
    ratios = [folner_set(H, i).ratio for i in (1, 2, 3)]
    assert ratios == sorted(ratios, reverse=True)


def test_b_index_examples():
    assert b_index(Z1, 3.5) == 3  # max word norm in F_i is i
    assert b_index(Z2, 5) == 2  # max word norm in [-i,i]^2 is 2i
    assert b_index(Z1, 0.5) == 1  # clamped
    # derived: max_folner_norm agrees with exhaustive check
    for spec, i in ((Z1, 4), (Z2, 3), (H, 2)):
        expected = max(spec.word_norm(g) for g in spec.folner_elements(i))
        assert max_folner_norm(spec, i) == expected


def test_injectivity_radius():
    tower = build_tower(Z1, 3)
    assert injectivity_radius(tower[2]) == 3  # cycle of 8
    assert injectivity_radius(tower[0]) == 0  # cycle of 2
    torus = build_tower(Z2, 2)[1]
    assert injectivity_radius(torus) == 1  # 4x4 torus


def test_default_time_scale():
    g = build_tower(Z1, 3)[2]
    assert default_time_scale(g) == g.diameter**2
    assert math.sqrt(default_time_scale(g)) <= 2 * g.diameter


def test_exchange_edges_dedupe():
    g2 = build_tower(Z1, 1)[0]
    assert len(g2.edges) == 4  # labelled multigraph
    assert len(g2.exchange_edges()) == 2  # simple oriented edges
    g8 = build_tower(Z1, 3)[2]
    assert len(g8.exchange_edges()) == len([e for e in g8.edges if e[0] != e[1]])


def test_action_permutation_is_graph_automorphism():
    g = build_tower(Z1, 3)[2]
    edge_set = {(x, y) for x, y, _ in g.edges}
    for sigma in g.reps:
        perm = g.action_permutation(sigma)
        assert sorted(perm.tolist()) == list(range(g.n))
        for x, y in edge_set:
            assert (int(perm[x]), int(perm[y])) in edge_set


def test_export_edge_list(tmp_path):
    g = build_tower(Z1, 2)[1]
    path = tmp_path / "edges.csv"
    g.export_edge_list(path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == len(g.edges)
    assert lines[0].split() == ["0", "1", "e1+"]
