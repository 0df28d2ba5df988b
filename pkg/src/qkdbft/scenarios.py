"""Built-in synthetic scenario suite.

The reference topologies behind the published comparison table are not
recoverable, so the suite ships synthetic stand-ins with node connectivity
2, 3 and 4:

* ``ring6``    — 6-cycle, C = 2, Byzantine capacity 1
* ``wagner8``  — Moebius ladder on 8 nodes (circulant C8(1,4)), C = 3, capacity 2
* ``circ12``   — circulant C12(1,2), C = 4, capacity 3

Byzantine placements are worst-case: one relay per disjoint path of the
probe demand, and rows expected to take two views put node 0 (the view-0
leader) in the Byzantine set with an equivocating proposal script.
"""

from __future__ import annotations

from .scenario import KBIT, ScenarioConfig
from .topology import Graph, local_connectivity, max_disjoint_paths

__all__ = ["ring6_edges", "wagner8_edges", "circ12_edges", "builtin_suite", "overhead_scenario"]


def ring6_edges():
    return tuple((i, (i + 1) % 6) for i in range(6))


def wagner8_edges():
    return tuple((i, (i + 1) % 8) for i in range(8)) + tuple((i, i + 4) for i in range(4))


def circ12_edges():
    return tuple((i, (i + 1) % 12) for i in range(12)) + tuple(
        (i, (i + 2) % 12) for i in range(12)
    )


# (name, edges, nodes, probe demand, per-f Byzantine sets)
_TOPOLOGIES = (
    ("ring6", ring6_edges, 6, (1, 4), {1: (0,), 2: (0, 2), 3: (0, 2, 3)}),
    ("wagner8", wagner8_edges, 8, (1, 6), {1: (2,), 2: (0, 2), 3: (0, 2, 5)}),
    ("circ12", circ12_edges, 12, (1, 7), {1: (3,), 2: (3, 11), 3: (0, 3, 11)}),
)


def _behaviors(byz: tuple[int, ...]) -> tuple:
    out = []
    for b in byz:
        if b == 0:
            # node 0 leads view 0; an equivocating first leader forces the
            # one extra view the timing column expects
            out.append((0, ("equivocate-propose", "eavesdrop-relayed-keys")))
        else:
            out.append((b, ("eavesdrop-relayed-keys",)))
    return tuple(out)


def builtin_suite(seed: int = 1) -> list[ScenarioConfig]:
    """Nine table rows: three topologies x f in {1, 2, 3}."""
    suite = []
    for name, edges_fn, nodes, (src, dst), byz_by_f in _TOPOLOGIES:
        for f in (1, 2, 3):
            byz = byz_by_f[f]
            suite.append(ScenarioConfig(
                name=f"{name}-f{f}",
                nodes=nodes,
                edges=edges_fn(),
                demands=((src, dst, 500 * KBIT),),
                byzantine=byz,
                behaviors=_behaviors(byz),
                seed=seed,
                view_limit=6,
            ))
    return suite


def overhead_scenario(seed: int = 1) -> ScenarioConfig:
    """C = 4, f = 3 consensus-overhead run: six antipodal demands large
    enough to spread delivery over several committed views."""
    return ScenarioConfig(
        name="circ12-overhead-f3",
        nodes=12,
        edges=circ12_edges(),
        demands=tuple((i, i + 6, 720 * KBIT) for i in range(6)),
        byzantine=(0, 3, 11),
        behaviors=_behaviors((0, 3, 11)),
        round_cap_bits=600 * KBIT,
        seed=seed,
        view_limit=16,
    )


def check_placements() -> None:
    """Assert the worst-case placement invariants the suite relies on."""
    for name, edges_fn, nodes, (src, dst), byz_by_f in _TOPOLOGIES:
        g = Graph.from_edges(nodes, edges_fn())
        beta = local_connectivity(g, src, dst)
        paths = max_disjoint_paths(g, src, dst).paths
        for f, byz in byz_by_f.items():
            if f > beta - 1:
                continue  # infeasible row; never needs a placement
            hit = sum(1 for p in paths if any(b in p[1:-1] for b in byz))
            if hit != f:
                raise AssertionError(
                    f"{name} f={f}: byzantine set {byz} covers {hit} paths, wanted {f}"
                )
