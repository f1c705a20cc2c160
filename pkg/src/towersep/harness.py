"""Experiment orchestration: theorem quantities as finite-size trend studies.

Each run_* function returns a Report (rows of plain dicts plus metadata);
emit_outputs writes them as CSV and JSON (and optional SVG trend plots).
Outputs are deterministic given the config and seed.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bundles as bnd
from . import config_space as cs
from . import dynamics as dyn
from . import spectral as spec_mod
from .groups import TowerSpec
from .towers import QuotientGraph, b_index, build_tower, folner_set

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

OUTPUT_ROOT_ENV = "TOWERSEP_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    family: str = "integer_lattice"
    d: int = 1
    k: int = 2
    levels: tuple[int, ...] = (3, 4, 5, 6, 7)
    bundle: str = "neighbor_product"
    bundle_file: str | None = None
    rate: str = "constant_rate"
    rate_file: str | None = None
    rate_c: float = 1.0
    schedule: str = "diameter_squared"
    explicit_schedule: tuple[float, ...] | None = None
    T: float = 1.0
    eps: tuple[float, ...] = (0.5,)
    i_values: tuple[int, ...] = (1,)
    delta: float = 0.1
    a_values: tuple[float, ...] = (0.25, 0.5, 1.0)
    rho: float = 0.5
    L: int = 1
    replicas: int = 400
    replicas_per_level: tuple[int, ...] | None = None
    samples: int = 20000
    seed: int = 42
    workers: int = 0
    output_dir: str = "out"
    svg: bool = False
    exact_prob_max_sites: int = 8

    def tower_spec(self) -> TowerSpec:
        return TowerSpec(self.family, d=self.d, k=self.k)

    def validate(self) -> None:
        if not self.levels or min(self.levels) < 1:
            raise ConfigError("levels must be >= 1")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.T <= 0:
            raise ConfigError("T must be positive")
        if not all(i >= 1 for i in self.i_values):
            raise ConfigError("Folner indices must be >= 1")
        if self.replicas_per_level is not None and len(self.replicas_per_level) != len(self.levels):
            raise ConfigError("replicas_per_level must match levels")


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    tower = raw.get("tower", {})
    model = raw.get("model", {})
    dyn_s = raw.get("dynamics", {})
    exp = raw.get("experiment", {})
    out = raw.get("output", {})
    try:
        cfg = ExperimentConfig(
            family=tower.get("family", "integer_lattice"),
            d=int(tower.get("d", 1)),
            k=int(tower.get("k", 2)),
            levels=tuple(tower.get("levels", [3, 4, 5, 6, 7])),
            bundle=model.get("bundle", "neighbor_product"),
            bundle_file=model.get("bundle_file"),
            rate=model.get("rate", "constant_rate"),
            rate_file=model.get("rate_file"),
            rate_c=float(model.get("rate_c", 1.0)),
            schedule=dyn_s.get("schedule", "diameter_squared"),
            explicit_schedule=tuple(dyn_s["explicit_schedule"]) if "explicit_schedule" in dyn_s else None,
            T=float(dyn_s.get("T", 1.0)),
            eps=tuple(exp.get("eps", [0.5])),
            i_values=tuple(exp.get("i", [1])),
            delta=float(exp.get("delta", 0.1)),
            a_values=tuple(exp.get("a", [0.25, 0.5, 1.0])),
            rho=float(exp.get("rho", 0.5)),
            L=int(exp.get("L", 1)),
            replicas=int(exp.get("replicas", 400)),
            replicas_per_level=tuple(exp["replicas_per_level"]) if "replicas_per_level" in exp else None,
            samples=int(exp.get("samples", 20000)),
            seed=int(exp.get("seed", 42)),
            workers=int(exp.get("workers", 0)),
            output_dir=out.get("directory", "out"),
            svg=bool(out.get("svg", False)),
            exact_prob_max_sites=int(exp.get("exact_prob_max_sites", 8)),
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    cfg.validate()
    return cfg


@dataclass
class Report:
    name: str
    columns: list[str]
    rows: list[dict]
    metadata: dict = field(default_factory=dict)


class _Context:
    """Graphs, time scale, bundle and rate resolved from a config."""

    def __init__(self, cfg: ExperimentConfig):
        cfg.validate()
        self.cfg = cfg
        self.spec = cfg.tower_spec()
        depth = max(cfg.levels)
        tower = build_tower(self.spec, depth)
        self.graphs = {g.level: g for g in tower}
        if cfg.explicit_schedule is not None:
            sched = cfg.explicit_schedule
            if len(sched) != depth:
                raise ConfigError("explicit schedule must cover levels 1..max")
            self.scale = dyn.TimeScale(
                tuple(range(1, depth + 1)), tuple(g.diameter for g in tower), sched
            )
        else:
            try:
                self.scale = dyn.TimeScale.from_graphs(tower, cfg.schedule)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        catalog = bnd.builtin_bundles(self.spec, c=cfg.rate_c)
        if cfg.bundle_file:
            self.bundle = bnd.load_bundle(cfg.bundle_file, self.spec)
        elif cfg.bundle in catalog and isinstance(catalog[cfg.bundle], bnd.VertexBundle):
            self.bundle = catalog[cfg.bundle]
        else:
            raise ConfigError(f"unknown vertex bundle {cfg.bundle!r}")
        if cfg.rate_file:
            rate = bnd.load_bundle(cfg.rate_file, self.spec)
        elif cfg.rate in catalog:
            rate = catalog[cfg.rate]
        else:
            raise ConfigError(f"unknown jump rate {cfg.rate!r}")
        if not isinstance(rate, bnd.JumpRate):
            raise ConfigError(f"{cfg.rate!r} is not a valid jump rate (symmetry/non-degeneracy)")
        self.rate = rate

    def replicas_for(self, level: int) -> int:
        if self.cfg.replicas_per_level is not None:
            return self.cfg.replicas_per_level[self.cfg.levels.index(level)]
        return self.cfg.replicas


SUPEREXP_COLUMNS = [
    "m", "N", "eps", "i", "b", "delta", "T", "t_m", "replicas", "hits",
    "p_hat", "ci_lo", "ci_hi", "log_rate", "log_rate_lo", "log_rate_hi",
    "cheb_bound", "exact_p",
]


def run_superexp(cfg: ExperimentConfig) -> Report:
    ctx = _Context(cfg)
    rows = []
    for m in cfg.levels:
        graph = ctx.graphs[m]
        t_m = ctx.scale.t_for(m)
        for eps in cfg.eps:
            for i in cfg.i_values:
                res = dyn.estimate_exceedance(
                    graph, ctx.bundle, ctx.rate, eps, i, cfg.delta, cfg.T, t_m,
                    ctx.replicas_for(m), cfg.seed, workers=cfg.workers,
                )
                lr_lo, lr_hi = res.log_rate_bounds(graph.n)
                cheb = exact_p = None
                if graph.n <= spec_mod.DENSE_SITE_CAP:
                    V = bnd.functional_all_states(ctx.bundle, graph, eps, i, t_m)
                    cheb = min(
                        math.exp(cfg.T * spec_mod.largest_eigenvalue(
                            spec_mod.GeneratorAction(graph, ctx.rate, t_m, a=a, V=V))
                            - a * cfg.delta * graph.n)
                        for a in cfg.a_values
                    )
                    if graph.n <= cfg.exact_prob_max_sites:
                        exact_p = spec_mod.exceedance_probability(
                            graph, ctx.rate, t_m, V, cfg.T, cfg.delta)
                rows.append({
                    "m": m, "N": graph.n, "eps": eps, "i": i,
                    "b": b_index(ctx.spec, eps * math.sqrt(t_m)),
                    "delta": cfg.delta, "T": cfg.T, "t_m": t_m,
                    "replicas": res.replicas, "hits": res.hits,
                    "p_hat": res.p_hat, "ci_lo": res.ci_lo, "ci_hi": res.ci_hi,
                    "log_rate": res.log_rate, "log_rate_lo": lr_lo, "log_rate_hi": lr_hi,
                    "cheb_bound": cheb, "exact_p": exact_p,
                })
    return Report("superexp", SUPEREXP_COLUMNS, rows, metadata=_meta(cfg))


def _one_block_observable(ctx: _Context, graph: QuotientGraph, i: int):
    poly = ctx.bundle.global_average_polynomial()
    o = graph.origin

    def G(cfg_state):
        fbar = bnd.local_average(ctx.bundle, graph, o, i, cfg_state)
        ebar = bnd.occupancy_average(graph, o, i, cfg_state)
        return abs(fbar - float(poly(ebar)))

    return G


def local_average_window(f: bnd.VertexBundle, i: int) -> list:
    """Union of the translated bundle supports: every infinite-graph site the
    Folner-averaged bundle value at the origin can depend on."""
    spec = f.spec
    window: list = []
    seen = set()
    for sigma in folner_set(spec, i).elements:
        for w in f.support:
            g = spec.mul(sigma, w)
            if g not in seen:
                seen.add(g)
                window.append(g)
    return window


def local_average_moments_exact(f: bnd.VertexBundle, i: int, rho: float) -> tuple[float, float]:
    """Exact mean and variance of the Folner-i local average of f at the
    origin under the rho-Bernoulli product measure (enumeration over the
    dependence window of the infinite graph)."""
    spec = f.spec
    window = local_average_window(f, i)
    if len(window) > 22:
        raise ValueError("dependence window too large for exact enumeration")
    pos = {g: j for j, g in enumerate(window)}
    fol = folner_set(spec, i).elements
    site_maps = []
    for sigma in fol:
        site_maps.append([pos[spec.mul(sigma, w)] for w in f.support])
    mean = 0.0
    second = 0.0
    for p in range(1 << len(window)):
        ones = bin(p).count("1")
        weight = rho**ones * (1 - rho) ** (len(window) - ones)
        val = 0.0
        for sites in site_maps:
            q = 0
            for j, z in enumerate(sites):
                q |= ((p >> z) & 1) << j
            val += float(f.table[q])
        val /= len(fol)
        mean += weight * val
        second += weight * val * val
    return mean, second - mean * mean


ONE_BLOCK_COLUMNS = [
    "m", "i", "F_size", "time_avg_estimate", "stderr", "exact_var",
    "mc_var", "var_times_F", "replicas",
]


def run_one_block(cfg: ExperimentConfig) -> Report:
    ctx = _Context(cfg)
    m = min(cfg.levels)
    graph = ctx.graphs[m]
    t_m = ctx.scale.t_for(m)
    rows = []
    for i in cfg.i_values:
        fol_size = len(folner_set(ctx.spec, i).elements)
        G = _one_block_observable(ctx, graph, i)
        init = cs.BernoulliSampler(cfg.rho, graph.n, graph.level)
        vals = []
        for k in range(ctx.replicas_for(m)):
            rng = dyn.replica_rng(cfg.seed + 1000 * i, k)
            traj = dyn.simulate(graph, ctx.rate, t_m, cfg.T, init, rng)
            vals.append(dyn.integrate_observable(traj, G) / cfg.T)
        vals_arr = np.array(vals)
        exact_var = None
        try:
            _, exact_var = local_average_moments_exact(ctx.bundle, i, cfg.rho)
        except ValueError:
            pass
        mc_var = _mc_variance(ctx.bundle, ctx.spec, i, cfg.rho, cfg.samples, cfg.seed + i)
        rows.append({
            "m": m, "i": i, "F_size": fol_size,
            "time_avg_estimate": float(vals_arr.mean()),
            "stderr": float(vals_arr.std(ddof=1) / math.sqrt(len(vals_arr))) if len(vals_arr) > 1 else 0.0,
            "exact_var": exact_var, "mc_var": mc_var,
            "var_times_F": None if exact_var is None else exact_var * fol_size,
            "replicas": len(vals),
        })
    meta = _meta(cfg)
    meta["var_loglog_slope"] = variance_loglog_slope(rows)
    return Report("one_block", ONE_BLOCK_COLUMNS, rows, metadata=meta)


def _mc_variance(f: bnd.VertexBundle, spec: TowerSpec, i: int, rho: float,
                 samples: int, seed: int) -> float:
    """Monte Carlo variance of the local average at the origin under the
    product measure, sampled directly on the dependence window."""
    window = local_average_window(f, i)
    pos = {g: j for j, g in enumerate(window)}
    fol = folner_set(spec, i).elements
    site_maps = [np.array([pos[spec.mul(s, w)] for w in f.support]) for s in fol]
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 77))))
    bits = (rng.random((samples, len(window))) < rho).astype(np.int64)
    vals = np.zeros(samples)
    for sites in site_maps:
        q = np.zeros(samples, dtype=np.int64)
        for j, z in enumerate(sites):
            q |= bits[:, z] << j
        vals += f.table[q]
    vals /= len(fol)
    return float(vals.var(ddof=1))


def variance_loglog_slope(rows: list[dict]) -> float | None:
    pts = [(r["F_size"], r["mc_var"]) for r in rows if r["mc_var"] and r["mc_var"] > 0]
    if len(pts) < 2:
        return None
    xs = np.log([p[0] for p in pts])
    ys = np.log([p[1] for p in pts])
    return float(np.polyfit(xs, ys, 1)[0])


TWO_BLOCKS_COLUMNS = ["m", "i", "distance_lo", "distance_hi", "n_sigma", "estimate", "stderr", "replicas"]


def run_two_blocks(cfg: ExperimentConfig) -> Report:
    ctx = _Context(cfg)
    m = max(cfg.levels)
    graph = ctx.graphs[m]
    t_m = ctx.scale.t_for(m)
    eps = cfg.eps[0]
    hi = eps * math.sqrt(t_m)
    dist = graph.dist_from_origin()
    rows = []
    for i in cfg.i_values:
        targets = [x for x in range(graph.n) if cfg.L < dist[x] <= hi]
        if not targets:
            continue

        def G(cfg_state, targets=targets, i=i):
            base = bnd.occupancy_average(graph, graph.origin, i, cfg_state)
            return sum(
                abs(base - bnd.occupancy_average(graph, x, i, cfg_state)) for x in targets
            ) / len(targets)

        init = cs.BernoulliSampler(cfg.rho, graph.n, graph.level)
        vals = []
        for k in range(ctx.replicas_for(m)):
            rng = dyn.replica_rng(cfg.seed + 2000 * i, k)
            traj = dyn.simulate(graph, ctx.rate, t_m, cfg.T, init, rng)
            vals.append(dyn.integrate_observable(traj, G) / cfg.T)
        vals_arr = np.array(vals)
        rows.append({
            "m": m, "i": i, "distance_lo": cfg.L, "distance_hi": hi,
            "n_sigma": len(targets),
            "estimate": float(vals_arr.mean()),
            "stderr": float(vals_arr.std(ddof=1) / math.sqrt(len(vals_arr))) if len(vals_arr) > 1 else 0.0,
            "replicas": len(vals),
        })
    return Report("two_blocks", TWO_BLOCKS_COLUMNS, rows, metadata=_meta(cfg))


FOLNER_COLUMNS = [
    "m", "eps", "b", "i", "F_size", "boundary_ratio", "ball_ratio",
    "max_deviation", "deviation_bound", "samples",
]


def run_folner_report(cfg: ExperimentConfig, deviation_samples: int = 1000) -> Report:
    ctx = _Context(cfg)
    spec = ctx.spec
    i = cfg.i_values[0]
    rows = []
    for m in cfg.levels:
        graph = ctx.graphs[m]
        t_m = ctx.scale.t_for(m)
        for eps in cfg.eps:
            b = b_index(spec, eps * math.sqrt(t_m))
            fol_b = folner_set(spec, b)
            ratio1 = fol_b.ratio
            ball_size = len(spec.ball(cfg.L))
            ratio2 = ball_size / len(fol_b.elements)
            rng = dyn.replica_rng(cfg.seed, 10_000 + m)
            max_dev = 0.0
            for _ in range(deviation_samples):
                eta = cs.BernoulliSampler(cfg.rho, graph.n, graph.level).sample(rng)
                ebar_b = bnd.occupancy_average(graph, graph.origin, b, eta)
                window_avg = 0.0
                for sigma in fol_b.elements:
                    x = graph.vertex(spec.mul(sigma, graph.reps[graph.origin]))
                    window_avg += bnd.occupancy_average(graph, x, i, eta)
                window_avg /= len(fol_b.elements)
                max_dev = max(max_dev, abs(ebar_b - window_avg))
            rows.append({
                "m": m, "eps": eps, "b": b, "i": i,
                "F_size": len(fol_b.elements),
                "boundary_ratio": ratio1, "ball_ratio": ratio2,
                "max_deviation": max_dev,
                "deviation_bound": 2.0 * (ratio1 + ratio2),
                "samples": deviation_samples,
            })
    return Report("folner_report", FOLNER_COLUMNS, rows, metadata=_meta(cfg))


SPECTRAL_COLUMNS = ["m", "N", "a", "T", "eps", "i", "lambda", "fk_expectation", "bound_margin"]


def run_spectral_check(cfg: ExperimentConfig) -> Report:
    ctx = _Context(cfg)
    eps = cfg.eps[0]
    i = cfg.i_values[0]
    rows = []
    for m in cfg.levels:
        graph = ctx.graphs[m]
        if graph.n > spec_mod.DENSE_SITE_CAP:
            continue
        t_m = ctx.scale.t_for(m)
        V = bnd.functional_all_states(ctx.bundle, graph, eps, i, t_m)
        for a in cfg.a_values:
            fk = spec_mod.feynman_kac(graph, ctx.rate, t_m, a, V, cfg.T)
            rows.append({
                "m": m, "N": graph.n, "a": a, "T": cfg.T, "eps": eps, "i": i,
                "lambda": fk.lam, "fk_expectation": fk.expectation,
                "bound_margin": fk.margin,
            })
    return Report("spectral_check", SPECTRAL_COLUMNS, rows, metadata=_meta(cfg))


PATH_LEMMA_COLUMNS = ["m", "N", "functions", "checks", "violations", "min_margin"]


def run_path_lemma(cfg: ExperimentConfig, functions: int = 100) -> Report:
    ctx = _Context(cfg)
    m = min(cfg.levels)
    graph = ctx.graphs[m]
    if graph.n > spec_mod.STATE_SITE_CAP:
        raise ConfigError("path lemma level exceeds the state cap")
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    violations = 0
    checks = 0
    min_margin = math.inf
    for _ in range(functions):
        F = random_invariant_function(graph, rng)
        for sigma in graph.reps:
            res = spec_mod.path_lemma_check(graph, sigma, F)
            checks += 1
            min_margin = min(min_margin, res.margin)
            if res.margin < -1e-12:
                violations += 1
    rows = [{
        "m": m, "N": graph.n, "functions": functions, "checks": checks,
        "violations": violations, "min_margin": min_margin,
    }]
    return Report("path_lemma", PATH_LEMMA_COLUMNS, rows, metadata=_meta(cfg))


def random_invariant_function(graph: QuotientGraph, rng) -> np.ndarray:
    """Random function on configurations, symmetrised over the group action
    (the scope in which the path lemma is applied)."""
    F = rng.standard_normal(1 << graph.n)
    acc = np.zeros_like(F)
    for sigma in graph.reps:
        acc += F[cs.state_permutation(graph, sigma)]
    return acc / graph.n


def _meta(cfg: ExperimentConfig) -> dict:
    return {
        "family": cfg.family, "d": cfg.d, "k": cfg.k,
        "levels": list(cfg.levels), "bundle": cfg.bundle, "rate": cfg.rate,
        "schedule": cfg.schedule, "T": cfg.T, "seed": cfg.seed,
    }


# -- output -------------------------------------------------------------------


def output_dir(cfg: ExperimentConfig) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    base = Path(root) / cfg.output_dir if root else Path(cfg.output_dir)
    return base


def emit_outputs(reports: list[Report], outdir: Path, svg: bool = False) -> list[Path]:
    """One CSV and one JSON per report, deterministic given the inputs."""
    written: list[Path] = []
    if not reports:
        return written
    outdir.mkdir(parents=True, exist_ok=True)
    for rep in reports:
        csv_path = outdir / f"{rep.name}.csv"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=rep.columns)
            writer.writeheader()
            for row in rep.rows:
                writer.writerow({k: _fmt(row.get(k)) for k in rep.columns})
        written.append(csv_path)
        json_path = outdir / f"{rep.name}.json"
        with open(json_path, "w") as fh:
            json.dump({"metadata": rep.metadata, "rows": rep.rows}, fh,
                      sort_keys=True, indent=2, default=_json_default)
            fh.write("\n")
        written.append(json_path)
        if svg:
            written.extend(_plot_report(rep, outdir))
    return written


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"not JSON serialisable: {type(v)}")


def _plot_report(rep: Report, outdir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xkey = "i" if rep.name in ("one_block", "two_blocks") else "m"
    ykey = {
        "superexp": "log_rate", "one_block": "time_avg_estimate",
        "two_blocks": "estimate", "folner_report": "boundary_ratio",
        "spectral_check": "bound_margin", "path_lemma": "min_margin",
    }.get(rep.name)
    if ykey is None:
        return []
    pts = [(r[xkey], r[ykey]) for r in rep.rows if r.get(ykey) is not None]
    if not pts:
        return []
    fig, ax = plt.subplots()
    ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-")
    ax.set_xlabel(xkey)
    ax.set_ylabel(ykey)
    ax.set_title(rep.name)
    path = outdir / f"{rep.name}.svg"
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
    return [path]
