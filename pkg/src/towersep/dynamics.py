"""Exact continuous-time simulation of the speeded-up exclusion process.

Event-driven kinetic Monte Carlo: every oriented non-loop edge is a jump
channel with rate t_m * c(e, eta) while its endpoints differ and 0 while
they agree (no-op swaps are thinned; the law of the state path is
unchanged). After each swap only the channels whose rate support touches
the two flipped sites are recomputed.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bundles import JumpRate, VertexBundle
from .config_space import BernoulliSampler, Configuration, SmallMeasure, sample_from_measure
from .towers import QuotientGraph, b_index, folner_set


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Counter-based generator; replica k gets an independent stream derived
    from (seed, k) so replicas are reproducible in any execution order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, replica))))


@dataclass(frozen=True)
class TimeScale:
    """Speed-up schedule per level, constrained to be increasing with
    sqrt(t_m) <= 2 diam(X_m)."""

    levels: tuple[int, ...]
    diameters: tuple[int, ...]
    schedule: tuple[float, ...]

    def __post_init__(self):
        for t, t2 in zip(self.schedule, self.schedule[1:]):
            if not t < t2:
                raise ValueError("time schedule must be strictly increasing")
        for t, diam in zip(self.schedule, self.diameters):
            if t <= 0 or math.sqrt(t) > 2 * diam:
                raise ValueError("schedule violates sqrt(t_m) <= 2 diam X_m")

    @classmethod
    def from_graphs(cls, graphs: list[QuotientGraph], kind: str = "diameter_squared") -> "TimeScale":
        diams = tuple(g.diameter for g in graphs)
        if kind == "diameter_squared":
            sched = tuple(float(d) ** 2 for d in diams)
        elif kind == "diameter":
            sched = tuple(float(d) for d in diams)
        else:
            raise ValueError(f"unknown schedule kind {kind!r}")
        return cls(tuple(g.level for g in graphs), diams, sched)

    def t_for(self, level: int) -> float:
        return self.schedule[self.levels.index(level)]


@dataclass
class Trajectory:
    """Piecewise-constant path: initial configuration plus the ordered swap
    events (time, site, site) on (0, T]."""

    graph: QuotientGraph
    init: Configuration
    events: list[tuple[float, int, int]]
    horizon: float

    def states(self):
        """Yields (start_time, end_time, Configuration) segments."""
        bits = self.init.bits
        t0 = 0.0
        n = self.graph.n
        for t, x, y in self.events:
            yield t0, t, Configuration(bits, n, self.graph.level)
            bits ^= (1 << x) | (1 << y)
            t0 = t
        yield t0, self.horizon, Configuration(bits, n, self.graph.level)

    def final(self) -> Configuration:
        bits = self.init.bits
        for _, x, y in self.events:
            bits ^= (1 << x) | (1 << y)
        return Configuration(bits, self.graph.n, self.graph.level)

    def export_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("time,origin,terminus\n")
            for t, x, y in self.events:
                fh.write(f"{t!r},{x},{y}\n")


class _RateMachine:
    """Per-graph channel bookkeeping for one jump rate, shareable across
    trajectories (read-only after construction)."""

    def __init__(self, graph: QuotientGraph, rate: JumpRate, t_m: float):
        self.graph = graph
        self.t_m = float(t_m)
        self.channels = []  # (x, y, table, sites)
        dep: dict[int, list[int]] = {z: [] for z in range(graph.n)}
        for e in graph.exchange_edges():
            x, y, label = e
            sites = [int(s) for s in rate.sites(graph, label)[x]]
            cid = len(self.channels)
            self.channels.append((x, y, rate.tables[label], sites))
            for z in {x, y, *sites}:
                dep[z].append(cid)
        self.dep = dep

    def channel_rate(self, cid: int, bits: list[int]) -> float:
        x, y, table, sites = self.channels[cid]
        if bits[x] == bits[y]:
            return 0.0
        p = 0
        for j, z in enumerate(sites):
            p |= bits[z] << j
        return self.t_m * float(table[p])


def _init_bits(init, graph: QuotientGraph, rng) -> list[int]:
    if isinstance(init, Configuration):
        cfg = init
    elif isinstance(init, (SmallMeasure, BernoulliSampler)):
        cfg = init.sample(rng) if isinstance(init, BernoulliSampler) else sample_from_measure(init, rng)
    else:
        raise TypeError("init must be a Configuration, SmallMeasure or sampler")
    if cfg.n != graph.n:
        raise ValueError("initial configuration has wrong size")
    return [(cfg.bits >> x) & 1 for x in range(graph.n)]


def _run(machine: _RateMachine, T: float, bits: list[int], rng,
         observer=None, events: list | None = None) -> None:
    if T <= 0:
        raise ValueError("horizon must be positive")
    nch = len(machine.channels)
    rates = np.array([machine.channel_rate(c, bits) for c in range(nch)])
    t = 0.0
    while True:
        total = float(rates.sum())
        if total <= 0.0:
            break
        t_next = t + rng.exponential(1.0 / total)
        if t_next > T:
            break
        u = rng.random() * total
        cid = int(np.searchsorted(np.cumsum(rates), u))
        cid = min(cid, nch - 1)
        x, y, _, _ = machine.channels[cid]
        bits[x], bits[y] = bits[y], bits[x]
        t = t_next
        if events is not None:
            events.append((t, x, y))
        if observer is not None:
            observer(t, x, y, bits)
        for c in set(machine.dep[x]) | set(machine.dep[y]):
            rates[c] = machine.channel_rate(c, bits)


def simulate(graph: QuotientGraph, rate: JumpRate, t_m: float, T: float, init,
             rng: np.random.Generator) -> Trajectory:
    """One exact path of the chain generated by t_m L_m on [0, T]."""
    machine = _RateMachine(graph, rate, t_m)
    bits = _init_bits(init, graph, rng)
    cfg0 = Configuration.from_bits(bits, graph.level)
    events: list[tuple[float, int, int]] = []
    _run(machine, T, bits, rng, events=events)
    return Trajectory(graph, cfg0, events, T)


def integrate_observable(traj: Trajectory, G) -> float:
    """Exact integral of G(eta(t)) over [0, T]: holding time times value
    summed over the piecewise-constant segments."""
    acc = 0.0
    for t0, t1, cfg in traj.states():
        acc += (t1 - t0) * float(G(cfg))
    return acc


class TheoremFunctional:
    """Incrementally maintained value of the theorem functional

        sum over x of | fbar_{x,i} - P(etabar_{x,b}) |

    with P the global-average polynomial of f and b = b(eps sqrt(t_m)).
    Swap updates touch only the vertices whose local averages can change,
    which is what makes long speeded-up runs affordable.
    """

    def __init__(self, f: VertexBundle, graph: QuotientGraph, eps: float, i: int, t_m: float):
        spec = graph.spec
        self.graph = graph
        self.n = graph.n
        self.b = b_index(spec, eps * math.sqrt(t_m))
        self.i = i
        self.coeffs = list(f.global_average_polynomial().coef)  # low order first
        self.f_sites = [[int(s) for s in row] for row in f.sites(graph)]
        self.f_table = f.table
        n = graph.n
        # vertices whose f-value depends on a site
        self.dep_f: list[list[int]] = [[] for _ in range(n)]
        for y, sites in enumerate(self.f_sites):
            for z in set(sites):
                self.dep_f[z].append(y)
        # targets x with sigma x = y for sigma in F_i (multiplicity matters)
        fol_i = folner_set(spec, i).elements
        self.aff_f: list[list[int]] = [[] for _ in range(n)]
        for y, v in enumerate(graph.reps):
            for sigma in fol_i:
                self.aff_f[y].append(graph.vertex(spec.mul(spec.inv(sigma), v)))
        self.inv_fi = 1.0 / len(fol_i)
        fol_b = folner_set(spec, self.b).elements
        self.aff_occ: list[list[int]] = [[] for _ in range(n)]
        for z, v in enumerate(graph.reps):
            for sigma in fol_b:
                self.aff_occ[z].append(graph.vertex(spec.mul(spec.inv(sigma), v)))
        self.inv_fb = 1.0 / len(fol_b)
        self.f_val = [0.0] * n
        self.fbar = [0.0] * n
        self.ebar = [0.0] * n
        self.term = [0.0] * n
        self.total = 0.0

    def _poly(self, u: float) -> float:
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * u + c
        return acc

    def _f_at(self, y: int, bits: list[int]) -> float:
        p = 0
        for j, z in enumerate(self.f_sites[y]):
            p |= bits[z] << j
        return float(self.f_table[p])

    def reset(self, bits: list[int]) -> None:
        n = self.n
        self.f_val = [self._f_at(y, bits) for y in range(n)]
        self.fbar = [0.0] * n
        self.ebar = [0.0] * n
        for y in range(n):
            fy = self.f_val[y] * self.inv_fi
            for x in self.aff_f[y]:
                self.fbar[x] += fy
        for z in range(n):
            if bits[z]:
                for x in self.aff_occ[z]:
                    self.ebar[x] += self.inv_fb
        self.term = [abs(self.fbar[x] - self._poly(self.ebar[x])) for x in range(n)]
        self.total = sum(self.term)

    def value(self) -> float:
        return self.total

    def on_swap(self, x: int, y: int, bits: list[int]) -> None:
        if bits[x] == bits[y]:  # exchanging equal occupancies changes nothing
            return
        touched = set()
        for z in (x, y):
            dz = (2 * bits[z] - 1) * self.inv_fb
            for v in self.aff_occ[z]:
                self.ebar[v] += dz
                touched.add(v)
        changed_y = set(self.dep_f[x]) | set(self.dep_f[y])
        for yy in changed_y:
            new = self._f_at(yy, bits)
            delta = (new - self.f_val[yy]) * self.inv_fi
            if delta:
                self.f_val[yy] = new
                for v in self.aff_f[yy]:
                    self.fbar[v] += delta
                    touched.add(v)
        for v in touched:
            new_term = abs(self.fbar[v] - self._poly(self.ebar[v]))
            self.total += new_term - self.term[v]
            self.term[v] = new_term


def integrate_functional(graph: QuotientGraph, rate: JumpRate, t_m: float, T: float,
                         init, functional, rng: np.random.Generator) -> float:
    """Exact time integral of an incrementally maintained observable along
    one simulated path, without materialising the trajectory."""
    machine = _RateMachine(graph, rate, t_m)
    bits = _init_bits(init, graph, rng)
    functional.reset(bits)
    acc = 0.0
    last = [0.0, functional.value()]

    def observer(t, x, y, bits_now):
        acc_val = (t - last[0]) * last[1]
        observer.acc += acc_val
        functional.on_swap(x, y, bits_now)
        last[0] = t
        last[1] = functional.value()

    observer.acc = 0.0
    _run(machine, T, bits, rng, observer=observer)
    acc = observer.acc + (T - last[0]) * last[1]
    return acc


def wilson_interval(hits: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("need at least one replica")
    phat = hits / n
    denom = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class ExceedanceResult:
    hits: int
    replicas: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    log_rate: float | None  # (1/N) log p_hat; None when censored (zero hits)
    censored: bool
    extra: dict = field(default_factory=dict)

    def log_rate_bounds(self, n_vertices: int) -> tuple[float, float]:
        lo = -math.inf if self.ci_lo == 0.0 else math.log(self.ci_lo) / n_vertices
        hi = math.log(self.ci_hi) / n_vertices if self.ci_hi > 0 else -math.inf
        return lo, hi


def _exceedance_replica(args) -> int:
    graph, f, rate, eps, i, delta, T, t_m, seed, k = args
    rng = replica_rng(seed, k)
    functional = TheoremFunctional(f, graph, eps, i, t_m)
    init = BernoulliSampler(0.5, graph.n, graph.level)
    integral = integrate_functional(graph, rate, t_m, T, init, functional, rng)
    return 1 if integral / graph.n >= delta else 0


def estimate_exceedance(graph: QuotientGraph, f: VertexBundle, rate: JumpRate,
                        eps: float, i: int, delta: float, T: float, t_m: float,
                        replicas: int, seed: int, workers: int = 0) -> ExceedanceResult:
    """Monte Carlo estimate of P( (1/N) int_0^T V dt >= delta ) from the
    half-density product start, with a Wilson confidence interval."""
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    args = [(graph, f, rate, eps, i, delta, T, t_m, seed, k) for k in range(replicas)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            indicators = list(pool.map(_exceedance_replica, args, chunksize=max(1, replicas // (8 * workers))))
    else:
        indicators = [_exceedance_replica(a) for a in args]
    hits = sum(indicators)
    p_hat = hits / replicas
    ci_lo, ci_hi = wilson_interval(hits, replicas)
    censored = hits == 0
    log_rate = None if censored else math.log(p_hat) / graph.n
    return ExceedanceResult(hits, replicas, p_hat, ci_lo, ci_hi, log_rate, censored)
