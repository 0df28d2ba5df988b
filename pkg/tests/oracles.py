"""Independent brute-force oracles used to cross-check the library.

Everything here is deliberately naive (exhaustive subset enumeration) and
shares no code with the package's max-flow implementation, so agreement
between the two is meaningful evidence of correctness.
"""

from __future__ import annotations

from itertools import combinations


def _adj(n: int, edges) -> dict[int, set[int]]:
    adj = {v: set() for v in range(n)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    return adj


def is_connected(n: int, edges, removed=frozenset()) -> bool:
    nodes = [v for v in range(n) if v not in removed]
    if not nodes:
        return True
    adj = _adj(n, edges)
    seen = {nodes[0]}
    stack = [nodes[0]]
    while stack:
        for w in adj[stack.pop()]:
            if w not in removed and w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(nodes)


def _separates(n: int, edges, s: int, t: int, cut: frozenset) -> bool:
    """True if removing ``cut`` leaves no s-t path."""
    adj = _adj(n, edges)
    seen = {s}
    stack = [s]
    while stack:
        for w in adj[stack.pop()]:
            if w == t:
                return False
            if w not in cut and w not in seen:
                seen.add(w)
                stack.append(w)
    return True


def local_connectivity_oracle(n: int, edges, s: int, t: int) -> int:
    """Menger by exhaustion: max internally-disjoint s-t paths.

    For non-adjacent s,t this is the smallest vertex cut, found by trying
    every subset of V minus {s,t} in increasing size. An s-t edge always
    supports one extra path on top of the cut bound for the graph with
    that edge removed.
    """
    e = (min(s, t), max(s, t))
    es = {(min(u, v), max(u, v)) for u, v in edges}
    if e in es:
        return 1 + local_connectivity_oracle(n, es - {e}, s, t)
    others = [v for v in range(n) if v not in (s, t)]
    for size in range(len(others) + 1):
        for cut in combinations(others, size):
            if _separates(n, es, s, t, frozenset(cut)):
                return size
    return len(others)  # unreachable for connected graphs


def node_connectivity_oracle(n: int, edges) -> int:
    if n == 1:
        return 0
    es = {(min(u, v), max(u, v)) for u, v in edges}
    if len(es) == n * (n - 1) // 2:
        return n - 1
    return min(
        local_connectivity_oracle(n, es, s, t)
        for s in range(n)
        for t in range(s + 1, n)
        if (s, t) not in es
    )


def connected_graphs(n: int):
    """Yield every connected labeled simple graph on n nodes as edge tuples."""
    slots = list(combinations(range(n), 2))
    for mask in range(1 << len(slots)):
        edges = tuple(slots[i] for i in range(len(slots)) if mask >> i & 1)
        if is_connected(n, edges):
            yield edges
