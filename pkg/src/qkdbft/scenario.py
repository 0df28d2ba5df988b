"""Scenario configuration: schema, validation, and lossless round-trip.

A scenario is one YAML document describing topology, per-link key pools,
demands, the Byzantine set with its behavior script, timing, and security
parameters. ``load_scenario(render_scenario(cfg)) == cfg`` holds for every
valid config.
"""

from __future__ import annotations

from dataclasses import dataclass

import yaml

from .crypto import SecurityParams

__all__ = [
    "KBIT",
    "BEHAVIORS",
    "ScenarioConfig",
    "ScenarioError",
    "load_scenario",
    "render_scenario",
]

KBIT = 1000  # reporting unit: 1 Kb = 1000 bits

BEHAVIORS = (
    "equivocate-propose",
    "withhold",
    "delay-beyond-delta",
    "eavesdrop-relayed-keys",
    "resource-contention",
    "forged-requirement",
    "forged-route",
    "tamper-kc",
    "tamper-kc-always",
    "forge-ts-attempt",
)


class ScenarioError(ValueError):
    """Schema violation; message carries the offending field path."""


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    nodes: int
    edges: tuple[tuple[int, int], ...]
    demands: tuple[tuple[int, int, int], ...]  # (src, dst, amount_bits)
    byzantine: tuple[int, ...] = ()
    behaviors: tuple[tuple[int, tuple[str, ...]], ...] = ()
    f: int | None = None  # declared bound; defaults to |byzantine|
    link_capacity_bits: int = 10_000_000
    round_cap_bits: int = 300 * KBIT
    delta_s: float = 1.0
    epsilon: float = 1e-12
    epsilon_k: float = 1e-12
    omega: int = 63
    ts_key_len_bits: int = 128
    seed: int = 0
    view_limit: int = 8
    min_views: int = 1

    def __post_init__(self) -> None:
        def bad(path, why):
            raise ScenarioError(f"{path}: {why}")

        if not self.name:
            bad("name", "must be non-empty")
        if self.nodes < 2:
            bad("topology.nodes", "need at least 2 nodes")
        for k, (u, v) in enumerate(self.edges):
            if not (0 <= u < self.nodes and 0 <= v < self.nodes):
                bad(f"topology.edges[{k}]", f"node id out of range 0..{self.nodes - 1}")
            if u == v:
                bad(f"topology.edges[{k}]", "self-loop")
        for k, (s, d, a) in enumerate(self.demands):
            if not (0 <= s < self.nodes and 0 <= d < self.nodes):
                bad(f"demands[{k}]", "node id out of range")
            if s == d:
                bad(f"demands[{k}]", "src equals dst")
            if a <= 0:
                bad(f"demands[{k}]", "amount must be positive")
        for k, b in enumerate(self.byzantine):
            if not 0 <= b < self.nodes:
                bad(f"byzantine[{k}].node", "node id out of range")
        if len(set(self.byzantine)) != len(self.byzantine):
            bad("byzantine", "duplicate node ids")
        for nid, blist in self.behaviors:
            if nid not in self.byzantine:
                bad(f"byzantine[{nid}]", "behaviors listed for a non-Byzantine node")
            for b in blist:
                if b not in BEHAVIORS:
                    bad(f"byzantine[{nid}].behaviors", f"unknown behavior {b!r}")
        if self.f is not None and self.f < 0:
            bad("f", "must be non-negative")
        for path, val in (
            ("link_capacity_kbit", self.link_capacity_bits),
            ("round_cap_kbit", self.round_cap_bits),
        ):
            if val <= 0:
                bad(path, "must be positive")
        if self.delta_s <= 0:
            bad("delta_s", "must be positive")
        if self.view_limit < 1 or self.min_views < 1:
            bad("view_limit", "view_limit and min_views must be >= 1")
        if self.min_views > self.view_limit:
            bad("min_views", "exceeds view_limit")
        self.security_params()  # raises on bad (epsilon, omega, L) combos

    @property
    def declared_f(self) -> int:
        return len(self.byzantine) if self.f is None else self.f

    def security_params(self) -> SecurityParams:
        try:
            return SecurityParams(self.epsilon, self.epsilon_k, self.omega, self.ts_key_len_bits)
        except ValueError as e:
            raise ScenarioError(f"security: {e}") from None

    def behavior_map(self) -> dict[int, tuple[str, ...]]:
        return dict(self.behaviors)


def _need(mapping, key, path, typ=None):
    if key not in mapping:
        raise ScenarioError(f"{path}.{key}: missing required field")
    val = mapping[key]
    if typ is not None and not isinstance(val, typ):
        raise ScenarioError(f"{path}.{key}: expected {typ.__name__}, got {type(val).__name__}")
    return val


def _amount_bits(entry: dict, path: str) -> int:
    if "amount_bits" in entry:
        return _need(entry, "amount_bits", path, int)
    return _need(entry, "amount_kbit", path, int) * KBIT


def load_scenario(text_or_path) -> ScenarioConfig:
    """Parse and validate a scenario document (text or file path)."""
    text = text_or_path
    if "\n" not in str(text_or_path) and str(text_or_path).endswith((".yml", ".yaml")):
        with open(text_or_path, encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f" at line {mark.line + 1}" if mark else ""
        raise ScenarioError(f"document: invalid YAML{loc}: {e}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("document: top level must be a mapping")

    topo = _need(doc, "topology", "document", dict)
    nodes = _need(topo, "nodes", "topology", int)
    edges = []
    for k, pair in enumerate(_need(topo, "edges", "topology", list)):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise ScenarioError(f"topology.edges[{k}]: expected a [u, v] pair")
        edges.append((int(pair[0]), int(pair[1])))

    demands = []
    for k, entry in enumerate(doc.get("demands", [])):
        if not isinstance(entry, dict):
            raise ScenarioError(f"demands[{k}]: expected a mapping")
        demands.append((
            _need(entry, "src", f"demands[{k}]", int),
            _need(entry, "dst", f"demands[{k}]", int),
            _amount_bits(entry, f"demands[{k}]"),
        ))

    byz, behaviors = [], []
    for k, entry in enumerate(doc.get("byzantine", [])):
        if not isinstance(entry, dict):
            raise ScenarioError(f"byzantine[{k}]: expected a mapping")
        nid = _need(entry, "node", f"byzantine[{k}]", int)
        byz.append(nid)
        blist = entry.get("behaviors", [])
        if blist:
            behaviors.append((nid, tuple(str(b) for b in blist)))

    sec = doc.get("security", {})
    if not isinstance(sec, dict):
        raise ScenarioError("security: expected a mapping")

    def kbits(key, default_bits):
        if f"{key}_bits" in doc:
            return int(doc[f"{key}_bits"])
        if f"{key}_kbit" in doc:
            return int(doc[f"{key}_kbit"]) * KBIT
        return default_bits

    try:
        return ScenarioConfig(
            name=str(_need(doc, "name", "document")),
            nodes=nodes,
            edges=tuple(edges),
            demands=tuple(demands),
            byzantine=tuple(byz),
            behaviors=tuple(behaviors),
            f=doc.get("f"),
            link_capacity_bits=kbits("link_capacity", 10_000_000),
            round_cap_bits=kbits("round_cap", 300 * KBIT),
            delta_s=float(doc.get("delta_s", 1.0)),
            epsilon=float(sec.get("epsilon", 1e-12)),
            epsilon_k=float(sec.get("epsilon_k", 1e-12)),
            omega=int(sec.get("omega", 63)),
            ts_key_len_bits=int(sec.get("ts_key_bits", 128)),
            seed=int(doc.get("seed", 0)),
            view_limit=int(doc.get("view_limit", 8)),
            min_views=int(doc.get("min_views", 1)),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ScenarioError):
            raise
        raise ScenarioError(f"document: {e}") from None


def _bits_field(doc: dict, key: str, bits: int) -> None:
    if bits % KBIT == 0:
        doc[f"{key}_kbit"] = bits // KBIT
    else:
        doc[f"{key}_bits"] = bits


def render_scenario(cfg: ScenarioConfig) -> str:
    """Serialize a config to scenario YAML (inverse of load_scenario)."""
    bmap = cfg.behavior_map()
    doc: dict = {
        "name": cfg.name,
        "topology": {"nodes": cfg.nodes, "edges": [list(e) for e in cfg.edges]},
        "demands": [],
        "byzantine": [
            {"node": b, **({"behaviors": list(bmap[b])} if b in bmap else {})}
            for b in cfg.byzantine
        ],
        "delta_s": cfg.delta_s,
        "security": {
            "epsilon": cfg.epsilon,
            "epsilon_k": cfg.epsilon_k,
            "omega": cfg.omega,
            "ts_key_bits": cfg.ts_key_len_bits,
        },
        "seed": cfg.seed,
        "view_limit": cfg.view_limit,
        "min_views": cfg.min_views,
    }
    for src, dst, bits in cfg.demands:
        entry = {"src": src, "dst": dst}
        if bits % KBIT == 0:
            entry["amount_kbit"] = bits // KBIT
        else:
            entry["amount_bits"] = bits
        doc["demands"].append(entry)
    if cfg.f is not None:
        doc["f"] = cfg.f
    _bits_field(doc, "link_capacity", cfg.link_capacity_bits)
    _bits_field(doc, "round_cap", cfg.round_cap_bits)
    return yaml.safe_dump(doc, sort_keys=False)
