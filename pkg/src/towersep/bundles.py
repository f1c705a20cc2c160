"""Translation-invariant local function bundles as truth tables.

A bundle stores one table over occupation patterns of a canonical ball in
the infinite Cayley graph; evaluation at a vertex of a finite quotient goes
through the periodic lift, so invariance under the group action is
structural and every level is covered, including the small ones where balls
wrap around.

Pattern convention: bit j of a table index is the occupation of the j-th
support element (canonical BFS order of the ball, generator order breaking
ties within layers).
"""

from __future__ import annotations

import numpy as np

from .groups import TowerSpec
from .towers import QuotientGraph, b_index, folner_set

TABLE_SITE_CAP = 20
ENUMERATION_CAP = 24


class BundleError(ValueError):
    pass


def _check_support(support):
    if len(support) > TABLE_SITE_CAP:
        raise BundleError(f"support of {len(support)} sites exceeds table cap {TABLE_SITE_CAP}")


def _edge_support(spec: TowerSpec, ball, s) -> list:
    """B(oe, r) union B(te, r) for the edge (id, s): the ball elements in
    canonical order followed by the new elements of the translated ball."""
    seen = set(ball)
    out = list(ball)
    for w in ball:
        g = spec.mul(s, w)
        if g not in seen:
            seen.add(g)
            out.append(g)
    return out


class VertexBundle:
    def __init__(self, name: str, spec: TowerSpec, radius: int, table: np.ndarray):
        self.name = name
        self.spec = spec
        self.radius = radius
        self.support = tuple(spec.ball(radius))
        _check_support(self.support)
        self.table = np.asarray(table, dtype=np.float64)
        if self.table.shape != (1 << len(self.support),):
            raise BundleError("table length must be 2**len(support)")
        self._sites_cache: dict = {}
        self._poly = None

    @classmethod
    def from_function(cls, name: str, spec: TowerSpec, radius: int, fn) -> "VertexBundle":
        """fn(bit) -> value, where bit(g) is the occupation at group element
        g in B(id, radius)."""
        support = spec.ball(radius)
        _check_support(support)
        pos = {g: j for j, g in enumerate(support)}
        table = np.empty(1 << len(support))
        for p in range(len(table)):
            table[p] = fn(lambda g: (p >> pos[g]) & 1)
        return cls(name, spec, radius, table)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.table)))

    def sites(self, graph: QuotientGraph) -> np.ndarray:
        """(n_vertices, support) array of quotient vertex indices: entry
        (x, j) is the vertex under the lift x~ * support[j]."""
        key = (graph.spec, graph.level)
        if key not in self._sites_cache:
            spec = self.spec
            out = np.empty((graph.n, len(self.support)), dtype=np.int64)
            for x, v in enumerate(graph.reps):
                for j, w in enumerate(self.support):
                    out[x, j] = graph.vertex(spec.mul(v, w))
            self._sites_cache[key] = out
        return self._sites_cache[key]

    def pattern(self, graph: QuotientGraph, x: int, eta) -> int:
        p = 0
        for j, site in enumerate(self.sites(graph)[x]):
            p |= eta.get(int(site)) << j
        return p

    def __call__(self, graph: QuotientGraph, x: int, eta) -> float:
        return float(self.table[self.pattern(graph, x, eta)])

    def values_all_states(self, graph: QuotientGraph, x: int) -> np.ndarray:
        states = np.arange(1 << graph.n, dtype=np.int64)
        p = np.zeros_like(states)
        for j, site in enumerate(self.sites(graph)[x]):
            p |= ((states >> int(site)) & 1) << j
        return self.table[p]

    def global_average_polynomial(self) -> np.polynomial.Polynomial:
        """Coefficients of rho -> E[f_o] under the rho-Bernoulli product
        measure, by exact enumeration over ball patterns."""
        if self._poly is not None:
            return self._poly
        s = len(self.support)
        if s > ENUMERATION_CAP:
            raise BundleError("ball too large for exact enumeration")
        weights = np.zeros(s + 1)
        for p in range(1 << s):
            weights[bin(p).count("1")] += self.table[p]
        rho = np.polynomial.Polynomial([0.0, 1.0])
        poly = np.polynomial.Polynomial([0.0])
        for k in range(s + 1):
            if weights[k]:
                poly = poly + weights[k] * rho**k * (1 - rho) ** (s - k)
        self._poly = poly
        return poly


def eval_vertex(f: VertexBundle, graph: QuotientGraph, x: int, eta) -> float:
    return f(graph, x, eta)


class EdgeBundle:
    def __init__(self, name: str, spec: TowerSpec, radius: int, tables: dict[str, np.ndarray]):
        self.name = name
        self.spec = spec
        self.radius = radius
        ball = spec.ball(radius)
        self.supports: dict[str, tuple] = {}
        self.tables: dict[str, np.ndarray] = {}
        for label, s in spec.generators():
            support = _edge_support(spec, ball, s)
            _check_support(support)
            self.supports[label] = tuple(support)
            table = np.asarray(tables[label], dtype=np.float64)
            if table.shape != (1 << len(support),):
                raise BundleError(f"table for {label} has wrong length")
            self.tables[label] = table
        self._sites_cache: dict = {}

    @classmethod
    def from_function(cls, name: str, spec: TowerSpec, radius: int, fn) -> "EdgeBundle":
        """fn(label, s, bit) -> value for the edge (id, s); bit(g) is the
        occupation at group element g in B(id, r) union s B(id, r)."""
        ball = spec.ball(radius)
        tables = {}
        for label, s in spec.generators():
            support = _edge_support(spec, ball, s)
            pos = {g: j for j, g in enumerate(support)}
            table = np.empty(1 << len(support))
            for p in range(len(table)):
                table[p] = fn(label, s, lambda g: (p >> pos[g]) & 1)
            tables[label] = table
        return cls(name, spec, radius, tables)

    def sites(self, graph: QuotientGraph, label: str) -> np.ndarray:
        key = (graph.spec, graph.level, label)
        if key not in self._sites_cache:
            spec = self.spec
            support = self.supports[label]
            out = np.empty((graph.n, len(support)), dtype=np.int64)
            for x, v in enumerate(graph.reps):
                for j, w in enumerate(support):
                    out[x, j] = graph.vertex(spec.mul(v, w))
            self._sites_cache[key] = out
        return self._sites_cache[key]

    def __call__(self, graph: QuotientGraph, edge, eta) -> float:
        x, _, label = edge
        p = 0
        for j, site in enumerate(self.sites(graph, label)[x]):
            p |= eta.get(int(site)) << j
        return float(self.tables[label][p])

    def values_all_states(self, graph: QuotientGraph, edge) -> np.ndarray:
        x, _, label = edge
        states = np.arange(1 << graph.n, dtype=np.int64)
        p = np.zeros_like(states)
        for j, site in enumerate(self.sites(graph, label)[x]):
            p |= ((states >> int(site)) & 1) << j
        return self.tables[label][p]

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(t))) for t in self.tables.values())


def eval_edge(f: EdgeBundle, graph: QuotientGraph, edge, eta) -> float:
    return f(graph, edge, eta)


def edge_values_all_states(f: EdgeBundle, graph: QuotientGraph, edge) -> np.ndarray:
    return f.values_all_states(graph, edge)


class JumpRate(EdgeBundle):
    """Edge bundle with the exchange-rate symmetries, validated exhaustively
    over the tables: c(e, eta) = c(rev e, eta), c(e, eta) = c(e, eta^e), and
    all values >= c0 > 0."""

    def __init__(self, name, spec, radius, tables, c0: float):
        super().__init__(name, spec, radius, tables)
        if c0 <= 0:
            raise BundleError("c0 must be positive")
        self.c0 = c0
        self.validate()

    @classmethod
    def from_function(cls, name, spec, radius, fn, c0):  # type: ignore[override]
        base = EdgeBundle.from_function(name, spec, radius, fn)
        return cls(name, spec, radius, base.tables, c0)

    def validate(self) -> None:
        ident = self.spec.identity()
        for label, s in self.spec.generators():
            support = self.supports[label]
            table = self.tables[label]
            if float(table.min()) < self.c0:
                raise BundleError(f"rate below c0 on generator {label}")
            pos = {g: j for j, g in enumerate(support)}
            # swap invariance: exchanging the endpoint bits fixes the value
            swapped = _bit_swap_indices(len(support), pos[ident], pos[s])
            if not np.array_equal(table, table[swapped]):
                raise BundleError(f"rate not invariant under the edge swap on {label}")
            # reversal: same value through the table of the inverse generator
            rlabel = self.spec.inverse_label(label)
            rsupport = self.supports[rlabel]
            rpos = {g: j for j, g in enumerate(rsupport)}
            s_inv = self.spec.inv(s)
            # element u relative to oe corresponds to s^{-1} u relative to te
            perm = [rpos[self.spec.mul(s_inv, u)] for u in support]
            states = np.arange(1 << len(support), dtype=np.int64)
            mapped = np.zeros_like(states)
            for j, pj in enumerate(perm):
                mapped |= ((states >> j) & 1) << pj
            if not np.allclose(table, self.tables[rlabel][mapped], rtol=0, atol=0):
                raise BundleError(f"rate not reversal-symmetric on {label}")


def _bit_swap_indices(n: int, a: int, b: int) -> np.ndarray:
    states = np.arange(1 << n, dtype=np.int64)
    diff = ((states >> a) & 1) ^ ((states >> b) & 1)
    return states ^ ((diff << a) | (diff << b))


# -- local and global averages ----------------------------------------------


def local_average(f: VertexBundle, graph: QuotientGraph, x: int, i: int, eta) -> float:
    """(1/|F_i|) sum over sigma in F_i of f at sigma x."""
    spec = graph.spec
    fol = folner_set(spec, i)
    v = graph.reps[x]
    acc = 0.0
    for sigma in fol.elements:
        acc += f(graph, graph.vertex(spec.mul(sigma, v)), eta)
    return acc / len(fol.elements)


def global_average_polynomial(f: VertexBundle) -> np.polynomial.Polynomial:
    return f.global_average_polynomial()


def occupancy_average(graph: QuotientGraph, x: int, i: int, eta) -> float:
    spec = graph.spec
    fol = folner_set(spec, i)
    v = graph.reps[x]
    acc = 0
    for sigma in fol.elements:
        acc += eta.get(graph.vertex(spec.mul(sigma, v)))
    return acc / len(fol.elements)


def eval_V(f: VertexBundle, graph: QuotientGraph, eps: float, i: int, t_m: float, eta) -> float:
    """Sum over all vertices of |local average of f - global-average
    polynomial evaluated at the local occupation density|, the density
    averaged over the Folner set of index b(eps sqrt(t_m))."""
    b = b_index(graph.spec, eps * float(np.sqrt(t_m)))
    poly = f.global_average_polynomial()
    total = 0.0
    for x in range(graph.n):
        fbar = local_average(f, graph, x, i, eta)
        ebar = occupancy_average(graph, x, b, eta)
        total += abs(fbar - float(poly(ebar)))
    return total


def functional_all_states(f: VertexBundle, graph: QuotientGraph, eps: float, i: int, t_m: float) -> np.ndarray:
    """Exact vector of the theorem functional over all 2**n states."""
    spec = graph.spec
    b = b_index(spec, eps * float(np.sqrt(t_m)))
    poly = f.global_average_polynomial()
    fol_i = folner_set(spec, i).elements
    fol_b = folner_set(spec, b).elements
    states = np.arange(1 << graph.n, dtype=np.int64)
    total = np.zeros(len(states))
    for x in range(graph.n):
        v = graph.reps[x]
        fbar = np.zeros(len(states))
        for sigma in fol_i:
            fbar += f.values_all_states(graph, graph.vertex(spec.mul(sigma, v)))
        fbar /= len(fol_i)
        ebar = np.zeros(len(states))
        for sigma in fol_b:
            ebar += (states >> graph.vertex(spec.mul(sigma, v))) & 1
        ebar /= len(fol_b)
        total += np.abs(fbar - poly(ebar))
    return total


# -- builtin catalog ---------------------------------------------------------


def occupancy(spec: TowerSpec) -> VertexBundle:
    return VertexBundle.from_function("occupancy", spec, 0, lambda bit: float(bit(spec.identity())))


def neighbor_product(spec: TowerSpec) -> VertexBundle:
    gens = [s for _, s in spec.generators()]

    def fn(bit):
        out = 1.0
        for s in gens:
            out *= bit(s)
        return out

    return VertexBundle.from_function("neighbor_product", spec, 1, fn)


def edge_sum(spec: TowerSpec) -> EdgeBundle:
    ident = spec.identity()
    return EdgeBundle.from_function(
        "edge_sum", spec, 0, lambda label, s, bit: float(bit(ident) + bit(s))
    )


def _endpoint_products(spec: TowerSpec, s, bit) -> float:
    gens = [g for _, g in spec.generators()]
    p1 = 1.0
    for g in gens:
        p1 *= bit(g)
    p2 = 1.0
    for g in gens:
        p2 *= bit(spec.mul(s, g))
    return p1 + p2


def edge_product_plus_c(spec: TowerSpec, c: float = 1.0) -> EdgeBundle:
    """Sum of the two endpoint neighbor-products plus a constant c > 0.

    Bounded below by c but not swap-symmetric, so it is an edge bundle,
    not a jump rate; see edge_product_rate for the symmetrised rate."""
    return EdgeBundle.from_function(
        "edge_product_plus_c",
        spec,
        1,
        lambda label, s, bit: _endpoint_products(spec, s, bit) + c,
    )


def constant_rate(spec: TowerSpec, value: float = 1.0) -> JumpRate:
    return JumpRate.from_function(
        "constant_rate", spec, 0, lambda label, s, bit: value, c0=value
    )


def edge_product_rate(spec: TowerSpec, c: float = 1.0) -> JumpRate:
    """Exchange-symmetrised variant of edge_product_plus_c: the average of
    the bundle at eta and at eta with the endpoints swapped. Keeps the lower
    bound c and restores the swap symmetry a jump rate requires."""
    ident = spec.identity()

    def fn(label, s, bit):
        def swapped_bit(g):
            if g == ident:
                return bit(s)
            if g == s:
                return bit(ident)
            return bit(g)

        return 0.5 * (
            _endpoint_products(spec, s, bit) + _endpoint_products(spec, s, swapped_bit)
        ) + c

    return JumpRate.from_function("edge_product_rate", spec, 1, fn, c0=c)


def builtin_bundles(spec: TowerSpec, c: float = 1.0) -> dict[str, VertexBundle | EdgeBundle]:
    """Catalog of the built-in bundles, keyed by name."""
    return {
        "occupancy": occupancy(spec),
        "neighbor_product": neighbor_product(spec),
        "edge_sum": edge_sum(spec),
        "edge_product_plus_c": edge_product_plus_c(spec, c),
        "constant_rate": constant_rate(spec),
        "edge_product_rate": edge_product_rate(spec, c),
    }


# -- text serialisation ------------------------------------------------------


def save_bundle(bundle: VertexBundle | EdgeBundle, path) -> None:
    with open(path, "w") as fh:
        kind = "rate" if isinstance(bundle, JumpRate) else (
            "edge" if isinstance(bundle, EdgeBundle) else "vertex"
        )
        fh.write(f"kind {kind}\n")
        fh.write(f"name {bundle.name}\n")
        fh.write(f"radius {bundle.radius}\n")
        if isinstance(bundle, JumpRate):
            fh.write(f"c0 {bundle.c0!r}\n")
        if isinstance(bundle, EdgeBundle):
            for label in bundle.tables:
                fh.write(f"label {label}\n")
                for p, val in enumerate(bundle.tables[label]):
                    fh.write(f"{p:0{len(bundle.supports[label])}b} {float(val)!r}\n")
        else:
            for p, val in enumerate(bundle.table):
                fh.write(f"{p:0{len(bundle.support)}b} {float(val)!r}\n")


def load_bundle(path, spec: TowerSpec) -> VertexBundle | EdgeBundle:
    """Read a bundle from the text format written by save_bundle.

    Pattern lines are binary strings in table order: character j from the
    right is the occupation of canonical support element j."""
    kind = name = None
    radius = c0 = None
    tables: dict[str, dict[int, float]] = {}
    plain: dict[int, float] = {}
    current = None
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            if key == "kind":
                kind = rest
            elif key == "name":
                name = rest
            elif key == "radius":
                radius = int(rest)
            elif key == "c0":
                c0 = float(rest)
            elif key == "label":
                current = rest
                tables[current] = {}
            else:
                target = tables[current] if current is not None else plain
                target[int(key, 2)] = float(rest)
    if kind is None or name is None or radius is None:
        raise BundleError("bundle file missing kind/name/radius header")
    if kind == "vertex":
        size = 1 << len(spec.ball(radius))
        if sorted(plain) != list(range(size)):
            raise BundleError("incomplete vertex table")
        return VertexBundle(name, spec, radius, np.array([plain[p] for p in range(size)]))
    arrays = {}
    for label, tab in tables.items():
        if sorted(tab) != list(range(len(tab))):
            raise BundleError(f"incomplete table for label {label}")
        arrays[label] = np.array([tab[p] for p in range(len(tab))])
    if kind == "edge":
        return EdgeBundle(name, spec, radius, arrays)
    if kind == "rate":
        if c0 is None:
            raise BundleError("rate file missing c0")
        return JumpRate(name, spec, radius, arrays, c0)
    raise BundleError(f"unknown bundle kind {kind!r}")
