"""Random connected graphs, BFS spanning trees, and periodic link schedules."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

Edge = tuple  # (u, v) with u < v


class ProtocolError(RuntimeError):
    pass


class AssumptionViolation(RuntimeError):
    """The network does not satisfy the connectivity assumptions."""


def _normalize_edges(edges) -> list:
    out = set()
    for u, v in edges:
        if u == v:
            raise ValueError(f"self-loop at vertex {u}")
        out.add((min(u, v), max(u, v)))
    return sorted(out)


def _adjacency(p: int, edges) -> list:
    adj = [[] for _ in range(p)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    return [sorted(a) for a in adj]


def _is_connected(p: int, edges) -> bool:
    if p <= 1:
        return True
    adj = _adjacency(p, edges)
    seen = [False] * p
    stack = [0]
    seen[0] = True
    count = 1
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                stack.append(v)
    return count == p


@dataclass
class Graph:
    p: int
    edges: list  # sorted (u, v) pairs, u < v
    adjacency: list = field(init=False)

    def __post_init__(self):
        self.edges = _normalize_edges(self.edges)
        for u, v in self.edges:
            if not (0 <= u < self.p and 0 <= v < self.p):
                raise ValueError(f"edge ({u}, {v}) outside vertex range")
        self.adjacency = _adjacency(self.p, self.edges)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def is_connected(self) -> bool:
        return _is_connected(self.p, self.edges)

    def max_degree(self) -> int:
        return max((len(a) for a in self.adjacency), default=0)


@dataclass
class SpanningTree:
    root: int
    parent: list  # parent[v], None at the root
    children: list  # ascending child lists
    depth: list
    build_messages: int  # 2|E| - (P-1) construction cost of the source graph

    @property
    def p(self) -> int:
        return len(self.parent)

    @property
    def height(self) -> int:
        return max(self.depth)

    def edge_count(self) -> int:
        return sum(1 for v in self.parent if v is not None)


def bfs_spanning_tree(g: Graph, root: int = 0) -> SpanningTree:
    """Breadth-first tree rooted at `root`, exploring neighbors in ascending order."""
    parent: list = [None] * g.p
    depth = [-1] * g.p
    depth[root] = 0
    order = [root]
    head = 0
    while head < len(order):
        u = order[head]
        head += 1
        for v in g.adjacency[u]:
            if depth[v] < 0:
                depth[v] = depth[u] + 1
                parent[v] = u
                order.append(v)
    for v in range(g.p):
        if depth[v] < 0:
            raise ProtocolError(f"vertex {v} unreachable from root {root}")
    children = [[] for _ in range(g.p)]
    for v in range(g.p):
        if parent[v] is not None:
            children[parent[v]].append(v)
    children = [sorted(c) for c in children]
    return SpanningTree(root=root, parent=parent, children=children, depth=depth,
                        build_messages=2 * g.num_edges - (g.p - 1))


def gen_barabasi_albert(p: int, attach_m: int, seed: int) -> Graph:
    """Preferential attachment: each new vertex links to attach_m existing ones."""
    if not (1 <= attach_m < p):
        raise ValueError("need p > attach_m >= 1")
    rng = np.random.default_rng(seed)
    targets = list(range(attach_m))
    repeated: list = []
    edges = []
    for source in range(attach_m, p):
        for t in targets:
            edges.append((t, source))
        repeated.extend(targets)
        repeated.extend([source] * attach_m)
        chosen: set = set()
        while len(chosen) < attach_m:
            chosen.add(repeated[rng.integers(len(repeated))])
        targets = sorted(chosen)
    return Graph(p=p, edges=edges)


def gen_erdos_renyi(p: int, pr: float, seed: int, max_tries: int = 10000) -> Graph:
    """Each pair linked independently with probability pr, resampled until connected."""
    if not (0 < pr <= 1):
        raise ValueError("pr must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    pairs = [(u, v) for u in range(p) for v in range(u + 1, p)]
    for _ in range(max_tries):
        draws = rng.random(len(pairs))
        edges = [pairs[i] for i in range(len(pairs)) if draws[i] < pr]
        if _is_connected(p, edges):
            return Graph(p=p, edges=edges)
    raise RuntimeError(f"no connected draw in {max_tries} tries (p={p}, pr={pr})")


def gen_geometric(p: int, d: float, seed: int, max_tries: int = 10000) -> Graph:
    """Uniform points in the unit square, linked when within distance d."""
    if d <= 0:
        raise ValueError("d must be positive")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        pts = rng.random((p, 2))
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=2))
        edges = [(u, v) for u in range(p) for v in range(u + 1, p)
                 if dist[u, v] <= d]
        if _is_connected(p, edges):
            return Graph(p=p, edges=edges)
    raise RuntimeError(f"no connected draw in {max_tries} tries (p={p}, d={d})")


@dataclass
class TvSchedule:
    """A periodic sequence of subgraphs whose union is the base graph."""

    base: Graph
    subgraphs: list  # one sorted edge list per step of the period

    def __post_init__(self):
        self.subgraphs = [_normalize_edges(s) for s in self.subgraphs]
        union = set()
        for s in self.subgraphs:
            union.update(s)
        if union != set(self.base.edges):
            raise ValueError("union of subgraphs differs from the base edge set")

    @property
    def period(self) -> int:
        return len(self.subgraphs)

    @property
    def p(self) -> int:
        return self.base.p

    def edges_at(self, t: int) -> list:
        return self.subgraphs[t % self.period]


def static_schedule(g: Graph) -> TvSchedule:
    """A static network viewed as a period-1 schedule."""
    return TvSchedule(base=g, subgraphs=[list(g.edges)])


def gen_tv_schedule(g: Graph, count: int, seed: int,
                    retain_prob: float = 0.5) -> TvSchedule:
    """Draw `count` random subgraphs of g and repair the union property.

    Every base edge is kept in each subgraph independently with
    retain_prob; an edge that lands in no subgraph is inserted into one
    chosen uniformly so the union is exactly the base graph.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if not (0 < retain_prob < 1):
        raise ValueError("retain_prob must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    keep = rng.random((count, len(g.edges))) < retain_prob
    missing = ~keep.any(axis=0)
    for j in np.flatnonzero(missing):
        keep[rng.integers(count), j] = True
    subgraphs = [[g.edges[j] for j in np.flatnonzero(keep[t])]
                 for t in range(count)]
    return TvSchedule(base=g, subgraphs=subgraphs)


def validate_connectivity_window(s: TvSchedule) -> int:
    """Smallest window length whose every union of consecutive subgraphs connects.

    Scans all cyclic windows over one period; the union property guarantees
    the answer is at most the period.
    """
    if not s.base.is_connected():
        raise AssumptionViolation("base graph is disconnected")
    for w in range(1, s.period + 1):
        ok = True
        for start in range(s.period):
            union = set()
            for off in range(w):
                union.update(s.subgraphs[(start + off) % s.period])
            if not _is_connected(s.p, union):
                ok = False
                break
        if ok:
            return w
    raise AssumptionViolation("no window of one period connects")  # unreachable


def graph_to_text(g: Graph) -> str:
    """Edge-list form: a '# p=<count>' header then one 'u v' pair per line."""
    lines = [f"# p={g.p}"]
    lines.extend(f"{u} {v}" for u, v in g.edges)
    return "\n".join(lines) + "\n"


def graph_from_text(text: str) -> Graph:
    p: Optional[int] = None
    edges = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "p":
                p = int(val)
            continue
        u, v = line.split()
        edges.append((int(u), int(v)))
    if p is None:
        raise ValueError("missing '# p=' header")
    return Graph(p=p, edges=edges)


def schedule_to_text(s: TvSchedule) -> str:
    """Blocks of edge lists separated by '# t=<i>' headers."""
    lines = [f"# p={s.p}"]
    for t, sub in enumerate(s.subgraphs):
        lines.append(f"# t={t}")
        lines.extend(f"{u} {v}" for u, v in sub)
    return "\n".join(lines) + "\n"


def schedule_from_text(text: str) -> TvSchedule:
    p: Optional[int] = None
    subgraphs: list = []
    current: Optional[list] = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            key = key.strip()
            if key == "p":
                p = int(val)
            elif key == "t":
                current = []
                subgraphs.append(current)
            continue
        u, v = line.split()
        current.append((int(u), int(v)))
    if p is None or not subgraphs:
        raise ValueError("missing '# p=' header or '# t=' blocks")
    union = set()
    for s in subgraphs:
        union.update((min(u, v), max(u, v)) for u, v in s)
    return TvSchedule(base=Graph(p=p, edges=sorted(union)), subgraphs=subgraphs)
