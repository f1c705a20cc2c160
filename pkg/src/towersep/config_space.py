"""Configurations, Bernoulli measures, periodic lifts and Dirichlet forms.

Exact-measure machinery works on dense vectors over all 2**n occupation
states and is capped at n <= 16 sites (65536 states). State i encodes the
configuration whose occupation bit at vertex x is ``(i >> x) & 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .groups import Element
from .towers import QuotientGraph

EXACT_SITE_CAP = 16
_SUM_TOL = 1e-12


class StateSpaceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Configuration:
    """Bit-packed occupation state; bit x is the occupation of vertex x."""

    bits: int
    n: int
    level: int | None = None

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.n:
            raise ValueError("bits outside the configuration space")

    def get(self, x: int) -> int:
        return (self.bits >> x) & 1

    def particle_count(self) -> int:
        return int(self.bits).bit_count() if hasattr(int, "bit_count") else bin(self.bits).count("1")

    def to_hex(self) -> str:
        width = (self.n + 3) // 4
        return f"{self.bits:0{width}x}"

    @classmethod
    def from_hex(cls, s: str, n: int, level: int | None = None) -> "Configuration":
        return cls(int(s, 16), n, level)

    @classmethod
    def from_bits(cls, values, level: int | None = None) -> "Configuration":
        bits = 0
        values = list(values)
        for j, v in enumerate(values):
            bits |= (int(v) & 1) << j
        return cls(bits, len(values), level)


@dataclass
class SmallMeasure:
    """Dense probability vector over all 2**n configurations."""

    n: int
    vector: np.ndarray
    level: int | None = None

    def __post_init__(self):
        if self.n > EXACT_SITE_CAP:
            raise StateSpaceTooLarge(f"{self.n} sites exceeds exact cap {EXACT_SITE_CAP}")
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.vector.shape != (1 << self.n,):
            raise ValueError("vector length must be 2**n")
        if self.vector.min() < -_SUM_TOL or abs(self.vector.sum() - 1.0) > _SUM_TOL:
            raise ValueError("not a probability vector")

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("state,probability\n")
            for idx, p in enumerate(self.vector):
                fh.write(f"{idx},{float(p)!r}\n")

    @classmethod
    def from_csv(cls, path, n: int, level: int | None = None) -> "SmallMeasure":
        vec = np.zeros(1 << n)
        with open(path) as fh:
            next(fh)
            for line in fh:
                idx, p = line.split(",")
                vec[int(idx)] = float(p)
        return cls(n, vec, level)


class BernoulliSampler:
    """Product Bernoulli sampler for state spaces beyond the exact cap."""

    def __init__(self, rho: float, n: int, level: int | None = None):
        self.rho = rho
        self.n = n
        self.level = level

    def sample(self, rng: np.random.Generator) -> Configuration:
        bits = 0
        draws = rng.random(self.n) < self.rho
        for j in range(self.n):
            if draws[j]:
                bits |= 1 << j
        return Configuration(bits, self.n, self.level)


# -- elementary moves --------------------------------------------------------


def swap(eta: Configuration, e: tuple[int, int, str] | tuple[int, int]) -> Configuration:
    return pair_swap(eta, e[0], e[1])


def pair_swap(eta: Configuration, x: int, y: int) -> Configuration:
    bx = (eta.bits >> x) & 1
    by = (eta.bits >> y) & 1
    if bx == by:
        return eta
    return Configuration(eta.bits ^ ((1 << x) | (1 << y)), eta.n, eta.level)


def periodic_lift(eta: Configuration, graph: QuotientGraph, window) -> tuple[int, ...]:
    """Pattern of the periodic extension of eta on a window of Cayley-graph
    vertices (group elements); entry j is the bit at window[j]."""
    return tuple(eta.get(graph.vertex(z)) for z in window)


# -- measures ----------------------------------------------------------------


def popcounts(n: int) -> np.ndarray:
    states = np.arange(1 << n, dtype=np.int64)
    out = np.zeros(1 << n, dtype=np.int64)
    for j in range(n):
        out += (states >> j) & 1
    return out


def bernoulli(rho: float, n: int, level: int | None = None):
    """Product rho-Bernoulli measure: exact vector when n <= 16, otherwise
    a sampler."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("density must be in [0, 1]")
    if n > EXACT_SITE_CAP:
        return BernoulliSampler(rho, n, level)
    ones = popcounts(n)
    with np.errstate(divide="ignore"):
        vec = rho**ones * (1.0 - rho) ** (n - ones)
    return SmallMeasure(n, vec, level)


def sample_from_measure(mu: SmallMeasure, rng: np.random.Generator) -> Configuration:
    idx = rng.choice(1 << mu.n, p=mu.vector / mu.vector.sum())
    return Configuration(int(idx), mu.n, mu.level)


def pair_swap_indices(n: int, x: int, y: int) -> np.ndarray:
    """For every state index, the index of the state with bits x, y exchanged."""
    states = np.arange(1 << n, dtype=np.int64)
    if x == y:
        return states
    diff = ((states >> x) & 1) ^ ((states >> y) & 1)
    return states ^ ((diff << x) | (diff << y))


def state_permutation(graph: QuotientGraph, sigma: Element) -> np.ndarray:
    """State-space permutation of the configuration action of sigma:
    entry eta is the index of sigma.eta."""
    perm = graph.action_permutation(graph.spec.reduce(sigma, graph.level))
    states = np.arange(1 << graph.n, dtype=np.int64)
    out = np.zeros_like(states)
    for x in range(graph.n):
        out |= ((states >> x) & 1) << int(perm[x])
    return out


def pushforward(mu: SmallMeasure, state_perm: np.ndarray) -> SmallMeasure:
    out = np.zeros_like(mu.vector)
    np.add.at(out, state_perm, mu.vector)
    return SmallMeasure(mu.n, out, mu.level)


def group_average(mu: SmallMeasure, graph: QuotientGraph) -> SmallMeasure:
    """Average of mu over the full vertex-transitive group action."""
    if mu.n != graph.n:
        raise ValueError("measure and graph sizes differ")
    acc = np.zeros_like(mu.vector)
    for sigma in graph.reps:
        np.add.at(acc, state_permutation(graph, sigma), mu.vector)
    return SmallMeasure(mu.n, acc / graph.n, mu.level)


def is_invariant(mu: SmallMeasure, graph: QuotientGraph, tol: float = 1e-9) -> bool:
    avg = group_average(mu, graph)
    return bool(np.max(np.abs(avg.vector - mu.vector)) <= tol)


# -- Dirichlet forms ---------------------------------------------------------


@dataclass
class DirichletResult:
    value: float
    per_coset: np.ndarray  # contribution of the out-edges at each vertex
    identity_rhs: float | None  # N * (1/2) sum over E0, when mu is invariant


def _edge_rate_arrays(rate, graph: QuotientGraph, edges):
    from .bundles import edge_values_all_states

    return [edge_values_all_states(rate, graph, e) for e in edges]


def dirichlet_form(mu: SmallMeasure, rate, graph: QuotientGraph) -> DirichletResult:
    """I_m(mu) = (1/2) sum over oriented edges of int c (pi_e sqrt(phi))^2 dnu.

    Also returns the per-coset decomposition (oriented edges grouped by their
    origin vertex) and, for invariant mu, the equivalent single-domain form
    N * (1/2) * sum over origin out-edges, asserted to agree to 1e-12.
    """
    n = graph.n
    if mu.n != n:
        raise ValueError("measure and graph sizes differ")
    phi = mu.vector * (1 << n)  # d(mu)/d(nu), nu uniform
    sphi = np.sqrt(phi)
    per_coset = np.zeros(graph.n)
    edges = graph.exchange_edges()
    for e, c_arr in zip(edges, _edge_rate_arrays(rate, graph, edges)):
        x, y, _ = e
        diff = sphi[pair_swap_indices(n, x, y)] - sphi
        per_coset[x] += 0.5 * np.mean(c_arr * diff * diff)
    value = float(per_coset.sum())
    identity_rhs = None
    if is_invariant(mu, graph):
        identity_rhs = graph.n * float(per_coset[graph.origin])
        if abs(value - identity_rhs) > 1e-12 * max(1.0, abs(value)):
            raise AssertionError(
                f"single-domain Dirichlet identity violated: {value} vs {identity_rhs}"
            )
    return DirichletResult(value, per_coset, identity_rhs)


def marginal_on(mu, graph: QuotientGraph, sites: list[int]) -> np.ndarray:
    """Marginal probability vector of mu over the given sites.

    mu may be a SmallMeasure or an iterable of Configurations (an empirical
    sample, histogrammed with equal weights).
    """
    k = len(sites)
    out = np.zeros(1 << k)
    if isinstance(mu, SmallMeasure):
        states = np.arange(1 << mu.n, dtype=np.int64)
        local = np.zeros_like(states)
        for j, x in enumerate(sites):
            local |= ((states >> x) & 1) << j
        np.add.at(out, local, mu.vector)
        return out
    samples = list(mu)
    for eta in samples:
        idx = 0
        for j, x in enumerate(sites):
            idx |= eta.get(x) << j
        out[idx] += 1.0
    return out / len(samples)


def _edges_within(graph: QuotientGraph, sites: list[int]) -> list[tuple[int, int]]:
    pos = {x: j for j, x in enumerate(sites)}
    out = []
    for x, y, _ in graph.exchange_edges():
        if x in pos and y in pos:
            out.append((pos[x], pos[y]))
    return out


def restricted_dirichlet(mu, graph: QuotientGraph, sites: list[int]) -> float:
    """Rate-one Dirichlet form of the marginal of mu on a subgraph:
    -int sqrt(phi) L sqrt(phi) with L = (1/2) sum of swaps over the edges
    induced on the given sites."""
    k = len(sites)
    if k > EXACT_SITE_CAP:
        raise StateSpaceTooLarge(f"{k} sites exceeds exact cap {EXACT_SITE_CAP}")
    marg = marginal_on(mu, graph, sites)
    sphi = np.sqrt(marg * (1 << k))
    edges = _edges_within(graph, sites)
    return _half_swap_form(sphi, k, edges) / (1 << k)


def _half_swap_form(sphi: np.ndarray, n: int, edges) -> float:
    """sum over oriented edges of (1/4) sum_eta (pi_e sphi)^2 (unnormalised)."""
    acc = 0.0
    for x, y in edges:
        diff = sphi[pair_swap_indices(n, x, y)] - sphi
        acc += 0.25 * float(diff @ diff)
    return acc


def sigma_pushforward(mu: SmallMeasure, graph: QuotientGraph, sites: list[int], sigma: Element) -> np.ndarray:
    """Joint marginal over Z_Lambda x Z_Lambda of the pairing eta -> (eta,
    sigma^{-1} eta) restricted to the given window sites."""
    spec = graph.spec
    shifted = [graph.index[spec.reduce(spec.mul(sigma, graph.reps[x]), graph.level)] for x in sites]
    k = len(sites)
    states = np.arange(1 << mu.n, dtype=np.int64)
    joint = np.zeros_like(states)
    for j, x in enumerate(sites):
        joint |= ((states >> x) & 1) << j
    for j, x in enumerate(shifted):
        joint |= ((states >> x) & 1) << (k + j)
    out = np.zeros(1 << (2 * k))
    np.add.at(out, joint, mu.vector)
    return out


def two_block_forms(mu2: np.ndarray, n_sites: int, edges, origin_pos: int = 0) -> tuple[float, float]:
    """The two Dirichlet forms on a product window Z_Lambda x Z_Lambda.

    mu2 is a probability vector over 2**(2 n_sites) states (second component
    in the high bits); edges are local index pairs of the window subgraph.
    Returns (product-generator form, origin-exchange form).
    """
    total = 2 * n_sites
    if total > EXACT_SITE_CAP:
        raise StateSpaceTooLarge(f"{total} product sites exceeds exact cap {EXACT_SITE_CAP}")
    mu2 = np.asarray(mu2, dtype=np.float64)
    if mu2.shape != (1 << total,):
        raise ValueError("measure vector has wrong length")
    sphi = np.sqrt(mu2 * (1 << total))
    prod_edges = [(x, y) for x, y in edges] + [(n_sites + x, n_sites + y) for x, y in edges]
    i_product = _half_swap_form(sphi, total, prod_edges) / (1 << total)
    # origin-exchange generator: single swap between the two copies of o
    diff = sphi[pair_swap_indices(total, origin_pos, n_sites + origin_pos)] - sphi
    i_exchange = 0.5 * float(diff @ diff) / (1 << total)
    return i_product, i_exchange
