"""Static relay-network graph model.

Computes node connectivity, maximum sets of internally-vertex-disjoint
paths (Menger, via unit-vertex-capacity max-flow with node splitting), and
the Byzantine capacity bound min(C - 1, floor((N - 1) / 3)).

Everything here is immutable and pure; topologies are fixed per scenario
and link failures are modeled as message withholding, never as graph
mutation.
"""

from __future__ import annotations

from dataclasses import dataclass


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    """Undirected, connected, simple graph with node ids 0..N-1."""

    node_count: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        if self.node_count <= 0:
            raise TopologyError("empty graph")
        for u, v in self.edges:
            if u == v:
                raise TopologyError(f"self-loop at node {u}")
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise TopologyError(f"edge ({u},{v}) out of node range")
            if u > v:
                raise TopologyError("edges must be stored as (min, max) pairs")
        if not self._connected():
            raise TopologyError("graph is disconnected")

    @classmethod
    def from_edges(cls, node_count: int, edges) -> "Graph":
        norm = frozenset((min(u, v), max(u, v)) for u, v in edges)
        return cls(node_count, norm)

    @classmethod
    def complete(cls, n: int) -> "Graph":
        return cls.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])

    @classmethod
    def ring(cls, n: int) -> "Graph":
        return cls.from_edges(n, [(i, (i + 1) % n) for i in range(n)])

    @classmethod
    def path(cls, n: int) -> "Graph":
        return cls.from_edges(n, [(i, i + 1) for i in range(n - 1)])

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self._adjacency()[v]

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edges

    def degree(self, v: int) -> int:
        return len(self.neighbors(v))

    def is_complete(self) -> bool:
        n = self.node_count
        return len(self.edges) == n * (n - 1) // 2

    def induced(self, nodes) -> "_SubgraphView":
        """View keeping only the given node set (for disclosure graphs)."""
        return _SubgraphView(self, frozenset(nodes))

    # -- internal -----------------------------------------------------------

    def _adjacency(self) -> dict[int, tuple[int, ...]]:
        adj = getattr(self, "_adj_cache", None)
        if adj is None:
            tmp: dict[int, list[int]] = {i: [] for i in range(self.node_count)}
            for u, v in self.edges:
                tmp[u].append(v)
                tmp[v].append(u)
            adj = {v: tuple(sorted(ns)) for v, ns in tmp.items()}
            object.__setattr__(self, "_adj_cache", adj)
        return adj

    def _connected(self) -> bool:
        if self.node_count == 1:
            return True
        adj: dict[int, list[int]] = {i: [] for i in range(self.node_count)}
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        seen = {0}
        stack = [0]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.node_count


@dataclass(frozen=True)
class PathSet:
    """A set of internally-vertex-disjoint paths between two endpoints."""

    endpoints: tuple[int, int]
    paths: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        s, t = self.endpoints
        seen_internal: set[int] = set()
        for p in self.paths:
            if p[0] != s or p[-1] != t:
                raise TopologyError(f"path {p} does not join {s} and {t}")
            if len(set(p)) != len(p):
                raise TopologyError(f"path {p} repeats a node")
            internal = set(p[1:-1])
            if internal & seen_internal:
                raise TopologyError("paths share an internal node")
            seen_internal |= internal

    def __len__(self) -> int:
        return len(self.paths)


# ---------------------------------------------------------------------------
# Max-flow with node splitting
# ---------------------------------------------------------------------------

def _unit_vertex_maxflow(adj: dict[int, tuple[int, ...]], n: int, s: int, t: int):
    """Max set of internally-disjoint s-t paths via unit vertex capacities.

    Split every node v into v_in (2v) and v_out (2v+1); internal nodes get
    capacity-1 in->out arcs, s and t effectively unbounded. Augmenting paths
    are found by BFS scanning neighbors in ascending id, which makes the
    resulting flow (and the decomposed path set) deterministic.
    """
    INF = n * n + 1
    cap: dict[tuple[int, int], int] = {}

    def add(a: int, b: int, c: int) -> None:
        cap[(a, b)] = cap.get((a, b), 0) + c
        cap.setdefault((b, a), 0)

    for v in range(n):
        add(2 * v, 2 * v + 1, INF if v in (s, t) else 1)
    for v in range(n):
        for w in adj[v]:
            add(2 * v + 1, 2 * w, 1)

    fwd: dict[int, list[int]] = {x: [] for x in range(2 * n)}
    for (a, b) in cap:
        fwd[a].append(b)
    for a in fwd:
        fwd[a].sort()

    source, sink = 2 * s + 1, 2 * t
    flow = 0
    while True:
        prev = {source: -1}
        queue = [source]
        while queue and sink not in prev:
            nxt = []
            for a in queue:
                for b in fwd[a]:
                    if b not in prev and cap[(a, b)] > 0:
                        prev[b] = a
                        nxt.append(b)
            queue = nxt
        if sink not in prev:
            break
        b = sink
        while b != source:
            a = prev[b]
            cap[(a, b)] -= 1
            cap[(b, a)] += 1
            b = a
        flow += 1
    return flow, cap, fwd


def _decompose_paths(g: Graph, cap, s: int, t: int, flow: int) -> list[tuple[int, ...]]:
    n = g.node_count
    used: dict[tuple[int, int], int] = {}
    for v in range(n):
        for w in g.neighbors(v):
            # net units pushed on arc v->w; reverse-residual growth makes this <= 0
            sent = 1 - cap.get((2 * v + 1, 2 * w), 1)
            if sent > 0:
                used[(v, w)] = sent
    paths = []
    for _ in range(flow):
        path = [s]
        v = s
        while v != t:
            nxt = min(w for (a, w) in used if a == v and used[(a, w)] > 0)
            used[(v, nxt)] -= 1
            path.append(nxt)
            v = nxt
        paths.append(tuple(path))
    return sorted(paths)


def max_disjoint_paths(g: Graph, s: int, t: int) -> PathSet:
    """A maximum-cardinality set of internally-vertex-disjoint s-t paths.

    Cardinality equals the s-t local vertex connectivity (Menger). Output is
    deterministic: BFS augmentation with ascending-id tie-breaks, paths
    sorted lexicographically, so every honest node derives the same plan.
    """
    if s == t:
        raise TopologyError("endpoints must differ")
    if not (0 <= s < g.node_count and 0 <= t < g.node_count):
        raise TopologyError("endpoint not in graph")
    flow, cap, _ = _unit_vertex_maxflow(g._adjacency(), g.node_count, s, t)
    paths = _decompose_paths(g, cap, s, t, flow)
    return PathSet((s, t), tuple(paths))


def local_connectivity(g: Graph, s: int, t: int) -> int:
    """s-t vertex connectivity (number of disjoint paths, Menger)."""
    if s == t:
        raise TopologyError("endpoints must differ")
    flow, _, _ = _unit_vertex_maxflow(g._adjacency(), g.node_count, s, t)
    return flow


def node_connectivity(g: Graph) -> int:
    """Minimum number of node removals that disconnect g (N-1 if complete)."""
    if g.node_count == 1:
        raise TopologyError("connectivity undefined for a single node")
    if g.is_complete():
        return g.node_count - 1
    best = g.node_count - 1
    for s in range(g.node_count):
        for t in range(s + 1, g.node_count):
            if not g.has_edge(s, t):
                best = min(best, local_connectivity(g, s, t))
    return best


def byzantine_capacity(g: Graph) -> int:
    """min(node_connectivity - 1, floor((N - 1) / 3))."""
    return min(node_connectivity(g) - 1, (g.node_count - 1) // 3)


class _SubgraphView:
    """Induced-subgraph wrapper exposing local_connectivity for ts_verify."""

    def __init__(self, g: Graph, nodes: frozenset[int]):
        self._g = g
        self._nodes = nodes
        self._cache: dict[tuple[int, int], int] = {}

    def local_connectivity(self, s: int, t: int) -> int:
        if s not in self._nodes or t not in self._nodes:
            return 0
        key = (min(s, t), max(s, t))
        v = self._cache.get(key)
        if v is None:
            idx = {v: i for i, v in enumerate(sorted(self._nodes))}
            adj = {
                idx[v]: tuple(idx[w] for w in self._g.neighbors(v) if w in self._nodes)
                for v in sorted(self._nodes)
            }
            flow, _, _ = _unit_vertex_maxflow(adj, len(idx), idx[s], idx[t])
            v = self._cache[key] = flow
        return v


# convenience: Graph gets local_connectivity too, for ts_verify on full topologies
def _graph_local_connectivity(self: Graph, s: int, t: int) -> int:
    cache = getattr(self, "_lc_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(self, "_lc_cache", cache)
    key = (min(s, t), max(s, t))
    if key not in cache:
        cache[key] = local_connectivity(self, s, t)
    return cache[key]


Graph.local_connectivity = _graph_local_connectivity
