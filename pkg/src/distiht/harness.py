"""Experiment orchestration: config files, run grids, and report files.

A config names one problem family, a set of graph families with seeds, the
algorithms to run, and the accuracy targets.  Every run is replayable from
the recorded seeds; reports come out as machine-readable CSV plus an
aggregate table in the usual rows-are-graphs layout.
"""
from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import cbdiht as cbdiht_mod
from . import subgradient as subgrad_mod
from .diht import Metrics, StopRule, run_diht, write_metrics_csv
from .graphs import (Graph, TvSchedule, gen_barabasi_albert, gen_erdos_renyi,
                     gen_geometric, gen_tv_schedule, static_schedule)
from .iht import IhtConfig, run_iht
from .model import Problem, generate_problem, loss_gradient, loss_info

CONFIG_SCHEMA_VERSION = 1

FAMILY_BUILDERS = {
    "ba": lambda p, param, seed: gen_barabasi_albert(p, int(param), seed),
    "er": lambda p, param, seed: gen_erdos_renyi(p, float(param), seed),
    "geo": lambda p, param, seed: gen_geometric(p, float(param), seed),
}


@dataclass
class GraphSpec:
    family: str
    param: float

    @property
    def label(self) -> str:
        return f"{self.family}{self.param:g}"

    def build(self, p: int, seed: int) -> Graph:
        if self.family not in FAMILY_BUILDERS:
            raise ValueError(f"unknown graph family {self.family!r}")
        return FAMILY_BUILDERS[self.family](p, self.param, seed)


def parse_graph_token(token: str) -> GraphSpec:
    """Accept 'family:param' tokens such as ba:3, er:0.25, geo:0.75."""
    family, _, param = token.strip().partition(":")
    if not param:
        raise ValueError(f"graph token {token!r} must look like family:param")
    return GraphSpec(family=family.strip(), param=float(param))


@dataclass
class ExperimentConfig:
    n: int = 100
    m: int = 50
    k: int = 5
    p: int = 10
    noise_std: float = 0.0
    spectral_cap: float = 0.99
    ensemble: str = "gaussian"
    problem_seeds: list = field(default_factory=lambda: [0])
    graphs: list = field(default_factory=lambda: [GraphSpec("er", 0.25)])
    graph_seeds: list = field(default_factory=lambda: [0])
    algorithms: list = field(default_factory=lambda: ["diht"])
    l: Optional[float] = None
    l_tv: Optional[float] = None
    step_exponent: float = 0.7
    accuracies: list = field(default_factory=lambda: [1e-2, 1e-5])
    max_iters: int = 200_000
    time_varying: bool = False
    subgraph_count: int = 10
    schedule_seed_offset: int = 1000
    out_dir: str = "out"
    raw_text: str = ""

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.raw_text.encode()).hexdigest()[:16]


def parse_config_text(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    version = cp.getint("meta", "schema_version", fallback=None)
    if version != CONFIG_SCHEMA_VERSION:
        raise ValueError(f"config schema_version must be {CONFIG_SCHEMA_VERSION}")
    cfg = ExperimentConfig(raw_text=text)
    if cp.has_section("problem"):
        sec = cp["problem"]
        cfg.n = sec.getint("n", cfg.n)
        cfg.m = sec.getint("m", cfg.m)
        cfg.k = sec.getint("k", cfg.k)
        cfg.p = sec.getint("p", cfg.p)
        cfg.noise_std = sec.getfloat("noise_std", cfg.noise_std)
        cfg.spectral_cap = sec.getfloat("spectral_cap", cfg.spectral_cap)
        cfg.ensemble = sec.get("ensemble", cfg.ensemble)
        if "seeds" in sec:
            cfg.problem_seeds = [int(s) for s in sec["seeds"].split(",") if s.strip()]
    if cp.has_section("graphs"):
        sec = cp["graphs"]
        if "families" in sec:
            cfg.graphs = [parse_graph_token(t) for t in sec["families"].split(",")]
        if "seeds" in sec:
            cfg.graph_seeds = [int(s) for s in sec["seeds"].split(",") if s.strip()]
    if cp.has_section("algorithms"):
        sec = cp["algorithms"]
        if "run" in sec:
            cfg.algorithms = [a.strip() for a in sec["run"].split(",") if a.strip()]
        if sec.get("l", "auto").strip() != "auto":
            cfg.l = sec.getfloat("l")
        if sec.get("l_tv", "auto").strip() != "auto":
            cfg.l_tv = sec.getfloat("l_tv")
        cfg.step_exponent = sec.getfloat("step_exponent", cfg.step_exponent)
    if cp.has_section("run"):
        sec = cp["run"]
        if "accuracies" in sec:
            cfg.accuracies = [float(a) for a in sec["accuracies"].split(",")]
        cfg.max_iters = sec.getint("max_iters", cfg.max_iters)
        cfg.time_varying = sec.getboolean("time_varying", cfg.time_varying)
        cfg.subgraph_count = sec.getint("subgraph_count", cfg.subgraph_count)
    if cp.has_section("output"):
        cfg.out_dir = cp["output"].get("dir", cfg.out_dir)
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


@dataclass
class RunCell:
    graph: str
    graph_seed: int
    problem_seed: int
    algorithm: str
    accuracy: float
    converged: bool
    iterations: int
    values: int
    messages: int
    broadcasts: int
    time_steps: int
    error: str = ""  # populated when the constituent run failed


@dataclass
class Report:
    cells: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)  # run label -> (Metrics, extras)
    config_hash: str = ""
    seeds: dict = field(default_factory=dict)

    def aggregate_rows(self) -> list:
        groups: dict = {}
        for c in self.cells:
            groups.setdefault((c.graph, c.algorithm, c.accuracy), []).append(c)
        rows = []
        for (graph, algo, acc), cells in sorted(groups.items()):
            ok = [c for c in cells if not c.error]
            if not ok:
                rows.append({"graph": graph, "algorithm": algo, "accuracy": acc,
                             "values": float("nan"), "time_steps": float("nan"),
                             "converged_fraction": 0.0})
                continue
            rows.append({
                "graph": graph, "algorithm": algo, "accuracy": acc,
                "values": float(np.mean([c.values for c in ok])),
                "time_steps": float(np.mean([c.time_steps for c in ok])),
                "converged_fraction": sum(c.converged for c in ok) / len(ok),
            })
        return rows


def _first_crossing(errors, ref_norm, accuracy):
    """Index (1-based iteration) of the first error at or below the target."""
    bound = accuracy * ref_norm
    for i, e in enumerate(errors):
        if e <= bound:
            return i
    return None


def _run_one(problem: Problem, spec: GraphSpec, graph_seed: int,
             algorithm: str, cfg: ExperimentConfig):
    """One (graph instance, algorithm) run; returns (cells, metrics, extras)."""
    tightest = min(cfg.accuracies)
    ref_norm = float(np.linalg.norm(problem.x_star))
    graph = spec.build(cfg.p, graph_seed)
    schedule = None
    if cfg.time_varying:
        schedule = gen_tv_schedule(graph, cfg.subgraph_count,
                                   graph_seed + cfg.schedule_seed_offset)

    def cells_from(errors, counters_at, converged_budget):
        out = []
        for acc in cfg.accuracies:
            hit = _first_crossing(errors, ref_norm, acc)
            if hit is None:
                counters = counters_at(None)
                out.append(RunCell(spec.label, graph_seed, problem.seed, algorithm,
                                   acc, False, converged_budget, *counters))
            else:
                counters = counters_at(hit)
                # errors[hit] is measured after iteration hit + 1
                out.append(RunCell(spec.label, graph_seed, problem.seed, algorithm,
                                   acc, True, hit + 1, *counters))
        return out

    if algorithm == "iht":
        a, b = problem.stacked()
        info = loss_info(problem)
        l = cfg.l if cfg.l is not None else 1.005 * info.lipschitz_global
        config = IhtConfig(l=l, k=problem.k, max_iters=cfg.max_iters,
                           tol=tightest, x_init=np.zeros(problem.n))
        grad = lambda x: 2.0 * (a.T @ (a @ x - b))
        trace = run_iht(grad, problem.x_star, config)
        errors = trace.errors_vs_truth[1:]  # error after each iteration
        metrics = Metrics()
        for i, e in enumerate(errors):
            metrics.snapshot(i + 1, e)
        return cells_from(errors, lambda hit: (0, 0, 0, 0) if hit is None
                          else (0, 0, 0, 0), len(errors)), metrics, ()

    if algorithm == "diht":
        if cfg.time_varying:
            raise ValueError("the tree-based algorithm needs a static network")
        run = run_diht(problem, graph, l=cfg.l,
                       stop=StopRule(tol=tightest, max_iters=cfg.max_iters),
                       keep_iterates=False)
        errors = run.trace.errors_vs_truth[1:]

        def counters(hit):
            rows = run.metrics.per_iteration
            row = rows[-1] if hit is None else rows[hit]
            return (row["values_cum"], row["messages_cum"],
                    row["broadcasts_cum"], row["time_steps_cum"])

        return cells_from(errors, counters, len(errors)), run.metrics, ()

    if algorithm == "cbdiht":
        sched = schedule if schedule is not None else static_schedule(graph)
        run = cbdiht_mod.run_cbdiht(
            problem, sched, l_tv=cfg.l_tv,
            stop=StopRule(tol=tightest, max_iters=cfg.max_iters),
            keep_iterates=False)
        errors = run.worst_errors

        def counters(hit):
            rows = run.metrics.per_iteration
            row = rows[-1] if hit is None else rows[hit]
            return (row["values_cum"], row["messages_cum"],
                    row["broadcasts_cum"], row["time_steps_cum"])

        extra_cols = ("outer_iter", "s_k", "eps_norm_sq", "initiated_count")
        return cells_from(errors, counters, len(errors)), run.metrics, extra_cols

    if algorithm == "subgrad":
        net = schedule if schedule is not None else graph
        config = subgrad_mod.SubgradConfig(step_exponent=cfg.step_exponent,
                                           max_iters=cfg.max_iters, tol=tightest)
        record_every = max(1, cfg.max_iters // 2000)
        trace, metrics = subgrad_mod.run_subgradient(
            problem, net, config, accuracies=cfg.accuracies,
            record_every=record_every)
        cells = []
        for acc in cfg.accuracies:
            hit = trace.crossings.get(acc)
            if hit is None:
                cells.append(RunCell(spec.label, graph_seed, problem.seed,
                                     algorithm, acc, False,
                                     len(trace.worst_errors),
                                     metrics.values_sent, metrics.messages_sent,
                                     metrics.broadcasts, metrics.time_steps))
            else:
                cells.append(RunCell(spec.label, graph_seed, problem.seed,
                                     algorithm, acc, True, hit["iterations"],
                                     hit["values"], hit["messages"],
                                     hit["broadcasts"], hit["time_steps"]))
        return cells, metrics, ()

    raise ValueError(f"unknown algorithm {algorithm!r}")


def run_experiment(cfg: ExperimentConfig) -> Report:
    """Execute the full (problem seed x graph x graph seed x algorithm) grid.

    A failing constituent run is captured in its cells rather than aborting
    the experiment.
    """
    report = Report(config_hash=cfg.config_hash,
                    seeds={"problem": list(cfg.problem_seeds),
                           "graph": list(cfg.graph_seeds)})
    for pseed in cfg.problem_seeds:
        problem = generate_problem(cfg.n, cfg.m, cfg.k, cfg.p, cfg.noise_std,
                                   cfg.spectral_cap, pseed, cfg.ensemble)
        for spec in cfg.graphs:
            for gseed in cfg.graph_seeds:
                for algo in cfg.algorithms:
                    label = f"{spec.label}-g{gseed}-p{pseed}-{algo}"
                    try:
                        cells, metrics, extra = _run_one(problem, spec, gseed,
                                                         algo, cfg)
                    except Exception as exc:  # captured per cell
                        for acc in cfg.accuracies:
                            report.cells.append(RunCell(
                                spec.label, gseed, pseed, algo, acc, False,
                                0, 0, 0, 0, 0, error=f"{type(exc).__name__}: {exc}"))
                        continue
                    report.cells.extend(cells)
                    report.curves[label] = (metrics, extra)
    return report


RUN_CSV_COLUMNS = ["graph", "graph_seed", "problem_seed", "algorithm",
                   "accuracy", "converged", "iterations", "values", "messages",
                   "broadcasts", "time_steps", "error"]
AGGREGATE_CSV_COLUMNS = ["graph", "algorithm", "accuracy", "values",
                         "time_steps", "converged_fraction"]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_report(report: Report, out_dir: str) -> list:
    """Write runs.csv, aggregate.csv, table.csv, per-run curves, provenance.

    Returns the list of files written.  Cells that hit the budget keep the
    counts actually spent, so their rows read as lower bounds.
    """
    os.makedirs(out_dir, exist_ok=True)
    curves_dir = os.path.join(out_dir, "curves")
    os.makedirs(curves_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "runs.csv")
    with open(path, "w") as fh:
        fh.write(",".join(RUN_CSV_COLUMNS) + "\n")
        for c in report.cells:
            fh.write(",".join(_fmt(getattr(c, col)) for col in RUN_CSV_COLUMNS)
                     + "\n")
    written.append(path)

    path = os.path.join(out_dir, "aggregate.csv")
    rows = report.aggregate_rows()
    with open(path, "w") as fh:
        fh.write(",".join(AGGREGATE_CSV_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r[col]) for col in AGGREGATE_CSV_COLUMNS) + "\n")
    written.append(path)

    # wide table: one row per graph family, one column per algorithm/accuracy,
    # a ">" marking budget-limited (lower bound) counts
    path = os.path.join(out_dir, "table.csv")
    combos = sorted({(r["algorithm"], r["accuracy"]) for r in rows})
    graphs = sorted({r["graph"] for r in rows})
    with open(path, "w") as fh:
        header = ["graph"] + [f"{a}@{acc:g}" for a, acc in combos]
        fh.write(",".join(header) + "\n")
        for g in graphs:
            cells = [g]
            for a, acc in combos:
                match = [r for r in rows if r["graph"] == g
                         and r["algorithm"] == a and r["accuracy"] == acc]
                if not match:
                    cells.append("")
                else:
                    r = match[0]
                    prefix = "" if r["converged_fraction"] == 1.0 else ">"
                    cells.append(f"{prefix}{r['values']:.6g}")
            fh.write(",".join(cells) + "\n")
    written.append(path)

    for label in sorted(report.curves):
        metrics, extra = report.curves[label]
        path = os.path.join(curves_dir, f"{label}.csv")
        write_metrics_csv(metrics, path, extra_columns=extra)
        written.append(path)

    path = os.path.join(out_dir, "provenance.txt")
    with open(path, "w") as fh:
        fh.write(f"config_hash={report.config_hash}\n")
        for kind in sorted(report.seeds):
            fh.write(f"seeds_{kind}={','.join(map(str, report.seeds[kind]))}\n")
    written.append(path)
    return written
