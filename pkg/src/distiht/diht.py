"""Distributed IHT on a static network via spanning-tree broadcast/convergecast.

Each iteration pushes the current sparse iterate down a BFS tree (2K values
per edge), lets every agent evaluate its local gradient, and aggregates the
gradient sum back up (N values per edge).  Transmitted values, messages,
broadcasts, and synchronous time steps are counted exactly.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graphs import Graph, SpanningTree, bfs_spanning_tree
from .iht import IhtTrace, NumericFailure, hard_threshold
from .model import Problem, loss_gradient, lipschitz_of_slice, loss_info


@dataclass
class Metrics:
    """Cumulative traffic and time accounting for one simulated run."""

    values_sent: int = 0
    messages_sent: int = 0
    broadcasts: int = 0
    time_steps: int = 0
    per_iteration: list = field(default_factory=list)  # cumulative snapshots

    def snapshot(self, iteration: int, err: float, extra: Optional[dict] = None):
        row = {"iter": iteration, "err": err, "values_cum": self.values_sent,
               "messages_cum": self.messages_sent, "broadcasts_cum": self.broadcasts,
               "time_steps_cum": self.time_steps}
        if extra:
            row.update(extra)
        self.per_iteration.append(row)


METRICS_COLUMNS = ["iter", "err", "values_cum", "messages_cum",
                   "broadcasts_cum", "time_steps_cum"]


def write_metrics_csv(metrics: Metrics, path: str, extra_columns=()) -> None:
    cols = METRICS_COLUMNS + list(extra_columns)
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in metrics.per_iteration:
            cells = []
            for c in cols:
                v = row.get(c, "")
                cells.append(f"{v:.17g}" if isinstance(v, float) else str(v))
            fh.write(",".join(cells) + "\n")


@dataclass
class StopRule:
    """When to end a run: relative error vs a reference, or budget.

    reference is "truth" (the instance's ground truth), "self" (stop on the
    relative iterate change instead), or an explicit vector.
    """

    tol: float = 1e-2
    max_iters: int = 200_000
    reference: object = "truth"

    def reference_vector(self, problem: Problem) -> Optional[np.ndarray]:
        if isinstance(self.reference, str):
            if self.reference == "truth":
                return problem.x_star
            if self.reference == "self":
                return None
            raise ValueError(f"unknown reference {self.reference!r}")
        return np.asarray(self.reference, dtype=float)


def _subtree_order(tree: SpanningTree) -> list:
    """Vertices in post-order (children before parents)."""
    order = []
    stack = [(tree.root, False)]
    while stack:
        v, done = stack.pop()
        if done:
            order.append(v)
        else:
            stack.append((v, True))
            for c in reversed(tree.children[v]):
                stack.append((c, False))
    return order


def _tree_sum(tree: SpanningTree, vectors) -> np.ndarray:
    """Leaf-to-root aggregation: each vertex adds its children's partial sums."""
    partial = [None] * tree.p
    for v in _subtree_order(tree):
        acc = np.array(vectors[v], dtype=float)
        for c in tree.children[v]:
            acc += partial[c]
        partial[v] = acc
    return partial[tree.root]


def _path_delay(tree: SpanningTree, delays) -> int:
    """Worst root-to-vertex delay; equals the tree height under unit delays."""
    if delays is None:
        return tree.height
    best = 0
    dist = [0] * tree.p
    # accumulate along BFS order so parents are resolved first
    order = sorted(range(tree.p), key=lambda v: tree.depth[v])
    for v in order:
        u = tree.parent[v]
        if u is None:
            continue
        e = (min(u, v), max(u, v))
        dist[v] = dist[u] + int(delays.get(e, 1))
        best = max(best, dist[v])
    return best


def convergecast_sum(tree: SpanningTree, per_agent_vectors) -> tuple:
    """Sum one vector per agent up the tree; returns (total, Metrics delta)."""
    vectors = [np.asarray(v, dtype=float) for v in per_agent_vectors]
    if len(vectors) != tree.p:
        raise ValueError("need exactly one vector per agent")
    n = vectors[0].shape[0]
    total = _tree_sum(tree, vectors)
    delta = Metrics()
    delta.values_sent = (tree.p - 1) * n
    delta.messages_sent = tree.p - 1
    delta.broadcasts = (tree.p - 1) * n
    delta.time_steps = tree.height
    return total, delta


def aggregate_lipschitz(tree: SpanningTree, per_agent_lipschitz) -> tuple:
    """Tree sum of the per-agent smoothness constants; a valid global bound.

    One request value travels down each edge and one scalar partial sum
    comes back up.
    """
    vals = [float(v) for v in per_agent_lipschitz]
    if len(vals) != tree.p:
        raise ValueError("need exactly one constant per agent")
    total = float(_tree_sum(tree, [np.array([v]) for v in vals])[0])
    delta = Metrics()
    delta.values_sent = 2 * (tree.p - 1)
    delta.messages_sent = 2 * (tree.p - 1)
    nonleaf = sum(1 for v in range(tree.p) if tree.children[v])
    delta.broadcasts = nonleaf + (tree.p - 1)
    delta.time_steps = 2 * tree.height
    return total, delta


@dataclass
class DihtRun:
    tree: SpanningTree
    agent_estimates: list
    sums: Optional[list]
    metrics: Metrics
    trace: IhtTrace
    coherence: list  # max over agents of |x_p - x_1| after each iteration
    l: float


def run_diht(problem: Problem, graph: Graph, l: Optional[float] = None,
             k_sparsity: Optional[int] = None, stop: Optional[StopRule] = None,
             x_init: Optional[np.ndarray] = None, delays: Optional[dict] = None,
             record_sums: bool = False, keep_iterates: bool = True) -> DihtRun:
    """Simulate distributed IHT rooted at agent 0 on a static graph.

    With l unset, the step constant defaults to 1.005 times the stacked
    gradient smoothness constant, mirroring the usual practice of running
    just above the tightest known bound.  A user-supplied l at or below the
    stacked constant is accepted with a warning since descent is then not
    guaranteed.
    """
    if graph.p != problem.p:
        raise ValueError("graph and problem disagree on the agent count")
    if not graph.is_connected():
        raise ValueError("graph must be connected")
    k = problem.k if k_sparsity is None else k_sparsity
    stop = stop or StopRule()
    info = None
    if l is None:
        info = loss_info(problem)
        l = 1.005 * info.lipschitz_global
    elif l <= 0:
        raise ValueError("l must be positive")
    else:
        info = loss_info(problem)
        if l <= info.lipschitz_global:
            warnings.warn("l below the stacked Lipschitz constant: descent is "
                          "not guaranteed", RuntimeWarning)

    tree = bfs_spanning_tree(graph, root=0)
    metrics = Metrics()
    metrics.messages_sent += tree.build_messages  # construction, control only

    n = problem.n
    x = np.zeros(n) if x_init is None else np.asarray(x_init, dtype=float).copy()
    if np.count_nonzero(x) > k:
        raise ValueError("x_init is not k-sparse")
    reference = stop.reference_vector(problem)
    ref_norm = float(np.linalg.norm(reference)) if reference is not None else None

    trace = IhtTrace()
    trace.iterates.append(x.copy())
    if reference is not None:
        trace.errors_vs_truth.append(float(np.linalg.norm(x - reference)))
    sums = [] if record_sums else None
    coherence = []
    agent_estimates = [x.copy() for _ in range(problem.p)]

    nonleaf = sum(1 for v in range(tree.p) if tree.children[v])
    down_values = (problem.p - 1) * 2 * k
    up_values = (problem.p - 1) * n
    iter_time = 2 * _path_delay(tree, delays)

    for it in range(stop.max_iters):
        # broadcast phase: every agent adopts the root iterate, then
        # evaluates its share of the gradient
        for p in range(problem.p):
            agent_estimates[p] = x.copy()
        z = [loss_gradient(problem.slices[p], agent_estimates[p])
             for p in range(problem.p)]
        # convergecast phase: child partial sums accumulate toward the root
        total = _tree_sum(tree, z)
        if not np.all(np.isfinite(total)):
            raise NumericFailure(it, "gradient sum")
        if record_sums:
            sums.append(total)
        x_next = hard_threshold(x - total / l, k)

        metrics.values_sent += down_values + up_values
        metrics.messages_sent += 2 * (problem.p - 1)
        metrics.broadcasts += 2 * k * nonleaf + up_values
        metrics.time_steps += iter_time

        delta_sq = float(np.linalg.norm(x - x_next) ** 2)
        trace.step_deltas.append(delta_sq)
        step_denom = max(1.0, float(np.linalg.norm(x)))
        coherence.append(max(float(np.max(np.abs(est - x))) if est.size else 0.0
                             for est in agent_estimates))
        x = x_next
        if keep_iterates:
            trace.iterates.append(x.copy())
        else:
            trace.iterates[-1] = x.copy()
        err = None
        if reference is not None:
            err = float(np.linalg.norm(x - reference))
            trace.errors_vs_truth.append(err)
        metrics.snapshot(it + 1, float("nan") if err is None else err)

        if reference is not None and stop.tol > 0:
            if err <= stop.tol * max(ref_norm, 1e-300):
                trace.converged_at = it + 1
                break
        elif stop.tol > 0:
            if np.sqrt(delta_sq) / step_denom <= stop.tol:
                trace.converged_at = it + 1
                break

    return DihtRun(tree=tree, agent_estimates=agent_estimates, sums=sums,
                   metrics=metrics, trace=trace, coherence=coherence, l=l)


def default_step_constant(problem: Problem, safety: float = 1.005) -> float:
    """The run_diht default: safety times the stacked smoothness constant."""
    return safety * loss_info(problem).lipschitz_global


def distributed_step_constant(problem: Problem, tree: SpanningTree,
                              safety: float = 1.005) -> tuple:
    """Step constant an actual deployment could compute: the tree-aggregated
    sum of per-agent constants, scaled by the safety factor."""
    per_agent = [lipschitz_of_slice(s) for s in problem.slices]
    total, delta = aggregate_lipschitz(tree, per_agent)
    return safety * total, delta
