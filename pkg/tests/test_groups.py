"""Group families, word metric, balls, and Folner sets."""

import itertools

import numpy as np
import pytest

from towersep.groups import TowerSpec, UnsupportedFamilyError


def test_unsupported_family():
    with pytest.raises(UnsupportedFamilyError):
        TowerSpec("free_group", d=1, k=2)


def test_lattice_group_axioms():
    spec = TowerSpec("integer_lattice", d=2, k=2)
    e = spec.identity()
    rng = np.random.default_rng(0)
    elems = [tuple(int(v) for v in rng.integers(-5, 6, 2)) for _ in range(20)]
    for g in elems:
        assert spec.mul(g, e) == g and spec.mul(e, g) == g
        assert spec.mul(g, spec.inv(g)) == e
    for g, h, k in itertools.islice(itertools.product(elems, repeat=3), 50):
        assert spec.mul(spec.mul(g, h), k) == spec.mul(g, spec.mul(h, k))


def test_heisenberg_group_axioms():
    spec = TowerSpec("heisenberg", k=2)
    e = spec.identity()
    rng = np.random.default_rng(1)
    elems = [tuple(int(v) for v in rng.integers(-3, 4, 3)) for _ in range(15)]
    for g in elems:
        assert spec.mul(g, spec.inv(g)) == e
        assert spec.mul(spec.inv(g), g) == e
    for g, h, k in itertools.islice(itertools.product(elems, repeat=3), 50):
        assert spec.mul(spec.mul(g, h), k) == spec.mul(g, spec.mul(h, k))


def test_heisenberg_matches_matrix_model():
    # oracle: upper-triangular integer matrices [[1,a,c],[0,1,b],[0,0,1]]
    spec = TowerSpec("heisenberg", k=2)

    def to_mat(g):
        a, b, c = g
        return np.array([[1, a, c], [0, 1, b], [0, 0, 1]])

    rng = np.random.default_rng(2)
    for _ in range(40):
        g = tuple(int(v) for v in rng.integers(-4, 5, 3))
        h = tuple(int(v) for v in rng.integers(-4, 5, 3))
        prod = to_mat(spec.mul(g, h))
        assert np.array_equal(prod, to_mat(g) @ to_mat(h))


def test_reduce_is_homomorphism():
    for spec in (TowerSpec("integer_lattice", d=2, k=3), TowerSpec("heisenberg", k=2)):
        rng = np.random.default_rng(3)
        size = 2 if spec.family == "integer_lattice" else 3
        for level in (1, 2):
            for _ in range(30):
                g = tuple(int(v) for v in rng.integers(-9, 10, size))
                h = tuple(int(v) for v in rng.integers(-9, 10, size))
                lhs = spec.reduce(spec.mul(g, h), level)
                rhs = spec.reduce(spec.mul(spec.reduce(g, level), spec.reduce(h, level)), level)
                assert lhs == rhs


def test_quotient_orders():
    assert [TowerSpec("integer_lattice", d=1, k=2).quotient_order(m) for m in (1, 2, 3)] == [2, 4, 8]
    assert TowerSpec("integer_lattice", d=2, k=2).quotient_order(2) == 16
    assert TowerSpec("heisenberg", k=2).quotient_order(1) == 8
    assert TowerSpec("heisenberg", k=2).quotient_order(2) == 64


def test_word_norm_lattice_is_l1():
    spec = TowerSpec("integer_lattice", d=2, k=2)
    rng = np.random.default_rng(4)
    for _ in range(20):
        g = tuple(int(v) for v in rng.integers(-6, 7, 2))
        assert spec.word_norm(g) == abs(g[0]) + abs(g[1])


def test_word_norm_heisenberg_vs_bfs_oracle():
    # independent oracle: breadth-first search over products of generators
    spec = TowerSpec("heisenberg", k=2)
    gens = [s for _, s in spec.generators()]
    dist = {spec.identity(): 0}
    frontier = [spec.identity()]
    for r in range(1, 7):
        nxt = []
        for g in frontier:
            for s in gens:
                h = spec.mul(g, s)
                if h not in dist:
                    dist[h] = r
                    nxt.append(h)
        frontier = nxt
    for g, r in dist.items():
        if r <= 5:
            assert spec.word_norm(g) == r


def test_ball_canonical_order():
    spec = TowerSpec("integer_lattice", d=1, k=2)
    ball = spec.ball(2)
    assert ball[0] == spec.identity()
    assert len(ball) == 5
    assert set(ball) == {(-2,), (-1,), (0,), (1,), (2,)}
    # deterministic: two calls give identical ordering
    assert spec.ball(2) == ball


def test_folner_elements_lattice_boxes():
    spec = TowerSpec("integer_lattice", d=2, k=2)
    f2 = spec.folner_elements(2)
    assert len(f2) == 25
    assert set(f2) == {(a, b) for a in range(-2, 3) for b in range(-2, 3)}


def test_folner_elements_heisenberg_boxes():
    spec = TowerSpec("heisenberg", k=2)
    f2 = spec.folner_elements(2)
    expected = {
        (a, b, c)
        for a in range(-2, 3)
        for b in range(-2, 3)
        for c in range(-4, 5)
    }
    assert set(f2) == expected
