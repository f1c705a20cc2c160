"""Group arithmetic for the supported tower families.

Elements are plain tuples of ints so they hash and compare cheaply:
``(x_1, ..., x_d)`` for the integer lattice, ``(a, b, c)`` for the discrete
Heisenberg group (upper unitriangular 3x3 integer matrices with ``a`` and
``b`` the off-diagonal entries and ``c`` the corner).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

Element = tuple


class UnsupportedFamilyError(ValueError):
    pass


@dataclass(frozen=True)
class TowerSpec:
    """A concrete group family plus the congruence base of its tower.

    family: "integer_lattice" or "heisenberg".
    d: lattice dimension (integer_lattice only).
    k: congruence base >= 2; level m quotients by the subgroup of elements
       whose coordinates are divisible by k**m.
    """

    family: str
    d: int = 1
    k: int = 2

    def __post_init__(self):
        if self.family not in ("integer_lattice", "heisenberg"):
            raise UnsupportedFamilyError(f"unknown family {self.family!r}")
        if self.family == "heisenberg" and self.d != 1:
            raise UnsupportedFamilyError("heisenberg family has no dimension parameter")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.k < 2:
            raise ValueError("congruence base must be >= 2")

    # -- group arithmetic ---------------------------------------------------

    def identity(self) -> Element:
        n = self.d if self.family == "integer_lattice" else 3
        return (0,) * n

    def mul(self, g: Element, h: Element) -> Element:
        if self.family == "integer_lattice":
            return tuple(a + b for a, b in zip(g, h))
        a, b, c = g
        a2, b2, c2 = h
        return (a + a2, b + b2, c + c2 + a * b2)

    def inv(self, g: Element) -> Element:
        if self.family == "integer_lattice":
            return tuple(-a for a in g)
        a, b, c = g
        return (-a, -b, a * b - c)

    def generators(self) -> list[tuple[str, Element]]:
        """Symmetric generating set in a fixed order; labels are stable."""
        if self.family == "integer_lattice":
            gens = []
            for j in range(self.d):
                e = [0] * self.d
                e[j] = 1
                gens.append((f"e{j + 1}+", tuple(e)))
                e[j] = -1
                gens.append((f"e{j + 1}-", tuple(e)))
            return gens
        return [
            ("x+", (1, 0, 0)),
            ("x-", (-1, 0, 0)),
            ("y+", (0, 1, 0)),
            ("y-", (0, -1, 0)),
        ]

    def inverse_label(self, label: str) -> str:
        return label[:-1] + ("-" if label.endswith("+") else "+")

    # -- congruence quotients ----------------------------------------------

    def quotient_order(self, level: int) -> int:
        q = self.k**level
        return q**self.d if self.family == "integer_lattice" else q**3

    def reduce(self, g: Element, level: int) -> Element:
        """Canonical residue of g modulo the level-m congruence subgroup.

        Coordinatewise reduction mod k**m is a group homomorphism for both
        families (the Heisenberg product is polynomial in the coordinates).
        """
        q = self.k**level
        return tuple(a % q for a in g)

    def quotient_elements(self, level: int):
        q = self.k**level
        n = self.d if self.family == "integer_lattice" else 3
        return product(range(q), repeat=n)

    # -- word metric on the infinite group ----------------------------------

    def word_norm(self, g: Element) -> int:
        if self.family == "integer_lattice":
            return sum(abs(a) for a in g)
        r = 0
        while g not in _heisenberg_ball_layers(self.k, r)[1]:
            r += 1
            if r > 512:
                raise RuntimeError("word norm search exceeded radius 512")
        return _heisenberg_ball_layers(self.k, r)[1][g]

    def ball(self, r: int) -> list[Element]:
        """B(id, r) in the Cayley graph, in canonical BFS order.

        BFS explores generators in the order of ``generators()``; ties within
        a layer resolve by first-visit order, so the result is deterministic.
        """
        return list(self._ball_with_norms(r)[0])

    def _ball_with_norms(self, r: int):
        if self.family == "heisenberg":
            return _heisenberg_ball_layers(self.k, r)
        return _lattice_ball(self.d, r)

    # -- Folner sets ---------------------------------------------------------

    def folner_elements(self, i: int) -> list[Element]:
        """Box Folner sets: [-i,i]^d for the lattice, the box with
        |a|,|b| <= i and |c| <= i**2 for the Heisenberg group."""
        if i < 1:
            raise ValueError("Folner index must be >= 1")
        if self.family == "integer_lattice":
            return [tuple(p) for p in product(range(-i, i + 1), repeat=self.d)]
        return [
            (a, b, c)
            for a in range(-i, i + 1)
            for b in range(-i, i + 1)
            for c in range(-i * i, i * i + 1)
        ]


@lru_cache(maxsize=None)
def _lattice_ball(d: int, r: int):
    spec = TowerSpec("integer_lattice", d=d)
    return _bfs_ball(spec, r)


@lru_cache(maxsize=None)
def _heisenberg_ball_layers(k: int, r: int):
    spec = TowerSpec("heisenberg", k=k)
    return _bfs_ball(spec, r)


def _bfs_ball(spec: TowerSpec, r: int):
    order = [spec.identity()]
    norms = {spec.identity(): 0}
    frontier = [spec.identity()]
    gens = spec.generators()
    for layer in range(1, r + 1):
        nxt = []
        for g in frontier:
            for _, s in gens:
                h = spec.mul(g, s)
                if h not in norms:
                    norms[h] = layer
                    nxt.append(h)
        order.extend(nxt)
        frontier = nxt
    return tuple(order), norms
