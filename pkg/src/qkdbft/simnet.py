"""Deterministic slot-synchronous network simulator.

One slot = one Delta. ``advance_slot`` delivers every message due in the
slot, then steps nodes in ascending id order; each send is scheduled one
slot ahead (adversary messages may opt for a longer delay, which honest
receivers discard as untrusted). Broadcast is N-1 unicasts.

Byzantine nodes wrap an honest replica and mutate its outbound traffic
according to a behavior script. Byzantine messages are whole broadcasts
(the same bytes to every recipient) except equivocate-propose, which
splits the recipient set between two conflicting signed payloads. The
`source` field is trusted: classical point-to-point channels in a QKD
network are hop-authenticated, so an adversary cannot speak under another
node's identity; temporary signatures make messages *transferable* (votes
quoted inside other messages remain checkable).

The OmniscientLedger records which path secrets Byzantine relays can
derive (any Byzantine internal node reconstructs a path's anchor block
from the broadcast closures plus its own link key), plus evidence and
violation flags. Nodes never read it.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .bits import Bits, derive_seed
from .consensus import (
    KEY_INDEX,
    VIEW_SLOTS,
    Demand,
    NetContext,
    Node,
    Outbound,
    PlanEntry,
    Proposal,
    ProtocolMessage,
    Step,
    message_body,
    path_edges,
    proposal_digest,
)
from .crypto import TemporarySignature, auth_tag
from .keystore import Keystore
from .topology import Graph

__all__ = ["Event", "OmniscientLedger", "HonestAgent", "AdversaryAgent", "World", "run_world"]


@dataclass(frozen=True, slots=True)
class Event:
    deliver_at: int
    recipient: int
    message: ProtocolMessage


class OmniscientLedger:
    """Simulator-side ground truth; write-only from the core, never
    visible to node state machines."""

    def __init__(self) -> None:
        self.observed: dict[tuple[int, int], set[int]] = {}  # (view, demand) -> path ids
        self.evidence: list[tuple] = []
        self.flags: dict[str, bool] = {
            "safety_violation": False,
            "liveness_violation": False,
            "ledger_violation": False,
            "endpoint_mismatch": False,
        }

    def observe_path(self, view: int, demand_idx: int, path_idx: int) -> None:
        self.observed.setdefault((view, demand_idx), set()).add(path_idx)


class HonestAgent:
    def __init__(self, node: Node):
        self.node = node

    def deliver_and_step(self, inbox: list[ProtocolMessage], now: int) -> list[Outbound]:
        for msg in inbox:
            self.node.handle_message(msg, now)
        return self.node.on_slot(now) + self.node.on_timer(now)


class AdversaryAgent:
    """Scripted Byzantine node: an honest core plus outbound mutations.

    The wrapper only uses resources the node really holds: its own TS key
    material (for re-signing mutated payloads) and its incident link keys
    (tracked by the ledger).
    """

    def __init__(self, node: Node, behaviors: tuple[str, ...], world: "World"):
        self.node = node
        self.behaviors = behaviors
        self.world = world
        self.rng = random.Random(
            int.from_bytes(derive_seed(world.master, "adv", node.nid), "big")
        )
        self.tampered = False

    @property
    def nid(self) -> int:
        return self.node.nid

    def deliver_and_step(self, inbox: list[ProtocolMessage], now: int) -> list[Outbound]:
        for msg in inbox:
            self.node.handle_message(msg, now)
        outs = self.node.on_slot(now) + self.node.on_timer(now)
        result: list[Outbound] = []
        for ob in outs:
            result.extend(self._mutate(ob, now))
        if "forge-ts-attempt" in self.behaviors and not self.node.idle and not self.node.crashed:
            result.extend(self._forge_attempt(now))
        return result

    # -- mutations ----------------------------------------------------------

    def _mutate(self, ob: Outbound, now: int) -> list[Outbound]:
        b = self.behaviors
        msg = ob.msg
        if "withhold" in b:
            self.world.ledger.evidence.append(("withhold", self.nid, now, msg.step))
            return []
        if msg.step == Step.PROPOSE:
            if "equivocate-propose" in b:
                return self._equivocate(ob, now)
            if "forged-requirement" in b:
                return self._forged_requirement(ob, now)
            if "forged-route" in b:
                return self._forged_route(ob, now)
        tamper_steps = (
            (Step.COMMIT, Step.RECOVERY_KC) if "tamper-kc-always" in b
            else (Step.COMMIT,) if "tamper-kc" in b
            else ()
        )
        if msg.step in tamper_steps and ("tamper-kc-always" in b or not self.tampered):
            mutated = self._tamper_kc(ob, now)
            if mutated is not None:
                self.tampered = True
                return mutated
        if "delay-beyond-delta" in b:
            return [Outbound(msg, ob.recipients, delay=2)]
        return [ob]

    def _resign(self, step: str, payload, view: int, now: int,
                disclosures) -> ProtocolMessage | None:
        key = self.node.keys.get((view, KEY_INDEX[step]))
        if key is None:
            return None
        tag, _ = auth_tag(
            key.material, message_body(step, view, self.nid, payload), self.world.ctx.params
        )
        sig = TemporarySignature(tag, self.nid, now, (view, KEY_INDEX[step]))
        return ProtocolMessage(step, payload, view, sig, disclosures, self.nid, now)

    def _equivocate(self, ob: Outbound, now: int) -> list[Outbound]:
        msg = ob.msg
        try:
            proposal = Proposal.from_obj(msg.payload)
        except (ValueError, TypeError):
            return [ob]
        if proposal.entries:
            e0 = proposal.entries[0]
            variant = Proposal(
                proposal.view,
                (PlanEntry(e0.demand_idx, e0.src, e0.dst, e0.paths,
                           max(1, e0.amount_bits - 1)),) + proposal.entries[1:],
            )
        else:
            u, v = sorted(self.world.graph.edges)[0]
            variant = Proposal(proposal.view, (PlanEntry(999_999, u, v, ((u, v),), 8),))
        alt = self._resign(Step.PROPOSE, variant.to_obj(), msg.view, now, msg.disclosures)
        if alt is None:
            return [ob]
        others = [r for r in range(self.world.n) if r != self.nid]
        half = len(others) // 2
        self.world.ledger.evidence.append(("equivocate-propose", self.nid, msg.view))
        return [
            Outbound(msg, tuple(others[:half])),
            Outbound(alt, tuple(others[half:])),
        ]

    def _forged_requirement(self, ob: Outbound, now: int) -> list[Outbound]:
        msg = ob.msg
        try:
            proposal = Proposal.from_obj(msg.payload)
        except (ValueError, TypeError):
            return [ob]
        if proposal.entries:
            e0 = proposal.entries[0]
            # over-claim: more than the demand's open remainder
            forged = PlanEntry(e0.demand_idx, e0.src, e0.dst, e0.paths, e0.amount_bits * 2)
            entries = (forged,) + proposal.entries[1:]
        else:
            u, v = sorted(self.world.graph.edges)[0]
            entries = (PlanEntry(999_999, u, v, ((u, v),), 8),)
        alt = self._resign(Step.PROPOSE, Proposal(proposal.view, entries).to_obj(),
                           msg.view, now, msg.disclosures)
        self.world.ledger.evidence.append(("forged-requirement", self.nid, msg.view))
        return [Outbound(alt, ob.recipients)] if alt else [ob]

    def _forged_route(self, ob: Outbound, now: int) -> list[Outbound]:
        msg = ob.msg
        try:
            proposal = Proposal.from_obj(msg.payload)
        except (ValueError, TypeError):
            return [ob]
        if not proposal.entries:
            return [ob]
        e0 = proposal.entries[0]
        # a permutation of the canonical path set is still a route claim the
        # static topology does not endorse
        forged = PlanEntry(e0.demand_idx, e0.src, e0.dst, tuple(reversed(e0.paths)),
                           e0.amount_bits)
        alt = self._resign(Step.PROPOSE,
                           Proposal(proposal.view, (forged,) + proposal.entries[1:]).to_obj(),
                           msg.view, now, msg.disclosures)
        self.world.ledger.evidence.append(("forged-route", self.nid, msg.view))
        return [Outbound(alt, ob.recipients)] if alt else [ob]

    def _tamper_kc(self, ob: Outbound, now: int) -> list[Outbound] | None:
        msg = ob.msg
        payload = msg.payload
        if not isinstance(payload, dict) or not payload.get("kcs"):
            return None
        kcs = [list(item) for item in payload["kcs"]]
        material = kcs[0][-1]
        kcs[0][-1] = material ^ Bits(1, material.n)
        mutated = dict(payload)
        mutated["kcs"] = kcs
        alt = self._resign(msg.step, mutated, msg.view, now, msg.disclosures)
        if alt is None:
            return None
        self.world.ledger.evidence.append(("tamper-kc", self.nid, msg.view))
        return [Outbound(alt, ob.recipients)]

    def _forge_attempt(self, now: int) -> list[Outbound]:
        """Guess a tag for a key slot this node never legitimately signed."""
        view = self.node.view
        payload = {"forged": self.rng.getrandbits(32)}
        w = self.world.ctx.params.omega
        sig = TemporarySignature(Bits(self.rng.getrandbits(w), w), self.nid, now, (view, 3))
        msg = ProtocolMessage(Step.REVOTE, payload, view, sig, (), self.nid, now)
        self.world.ledger.evidence.append(("forge-ts-attempt", self.nid, now))
        return [Outbound(msg)]


class World:
    """One scenario run: nodes, link pools, slot queue, ground truth."""

    def __init__(self, config):
        self.config = config
        self.graph = Graph.from_edges(config.nodes, config.edges)
        self.n = config.nodes
        self.f = config.declared_f
        self.params = config.security_params()
        self.master = derive_seed("world", config.name, config.seed)
        self.keystore = Keystore()
        for e in sorted(self.graph.edges):
            self.keystore.provision(e, config.link_capacity_bits,
                                    derive_seed(self.master, "link", *e))
        self.byz = frozenset(config.byzantine)
        self.behaviors = config.behavior_map()
        self.ledger = OmniscientLedger()
        self.trace: list[dict] = []
        demands = [Demand(i, s, d, a) for i, (s, d, a) in enumerate(config.demands)]
        self.ctx = NetContext(
            graph=self.graph,
            f=self.f,
            params=self.params,
            keystore=self.keystore,
            round_cap_bits=config.round_cap_bits,
            master=self.master,
            demands=demands,
            delivery_blocks=self._delivery_blocks,
            recovery_blocks=self._recovery_blocks,
            view_limit=config.view_limit,
            min_views=config.min_views,
            trace=self.trace.append,
        )
        self._inject_contention()
        self.agents: dict[int, object] = {}
        for nid in range(self.n):
            node = Node(nid, self.ctx)
            if nid in self.byz:
                self.agents[nid] = AdversaryAgent(node, self.behaviors.get(nid, ()), self)
            else:
                self.agents[nid] = HonestAgent(node)
        self.queue: dict[int, list[tuple[int, ProtocolMessage]]] = {}
        self.clock = 0
        self._delivery_cache: dict = {}
        self._recovery_cache: dict = {}

    def _inject_contention(self) -> None:
        """Adversary key requests that contend for pool resources.

        Modeled as synthetic demands present from view 0: the adversary
        requests a full pool's worth of key to one of its neighbors, so the
        greedy planner keeps allocating cap-limited chunks to it every view.
        """
        for nid in sorted(self.byz):
            if "resource-contention" not in self.behaviors.get(nid, ()):
                continue
            peer = self.graph.neighbors(nid)[0]
            self.ctx.demands.append(
                Demand(len(self.ctx.demands), nid, peer, self.config.link_capacity_bits,
                       injected=True)
            )
            self.ledger.evidence.append(("resource-contention", nid, peer))

    # -- key-block draws (idempotent per committed plan) ----------------------

    def _delivery_blocks(self, view: int, proposal: Proposal):
        key = (view, proposal_digest(proposal.to_obj(), self.master))
        got = self._delivery_cache.get(key)
        if got is not None:
            return got
        blocks = {}
        for e in proposal.entries:
            for i, path in enumerate(e.paths):
                blocks[(e.demand_idx, i)] = [
                    self.keystore.consume(edge, e.amount_bits, "delivery")
                    for edge in path_edges(path)
                ]
                if any(v in self.byz for v in path[1:-1]):
                    self.ledger.observe_path(view, e.demand_idx, i)
        self._delivery_cache[key] = blocks
        return blocks

    def _recovery_blocks(self, view: int, d: int, i: int, direction: int,
                         path: tuple[int, ...], amount_bits: int):
        key = (view, d, i, direction)
        got = self._recovery_cache.get(key)
        if got is not None:
            return got
        blocks = [
            self.keystore.consume(edge, amount_bits, "delivery")
            for edge in path_edges(path)
        ]
        if any(v in self.byz for v in path[1:-1]):
            self.ledger.observe_path(view, d, i)
        self._recovery_cache[key] = blocks
        return blocks

    # -- event loop -----------------------------------------------------------

    def advance_slot(self) -> None:
        now = self.clock
        inboxes: dict[int, list[ProtocolMessage]] = {}
        for rcpt, msg in self.queue.pop(now, []):
            inboxes.setdefault(rcpt, []).append(msg)
        for nid in range(self.n):
            for ob in self.agents[nid].deliver_and_step(inboxes.get(nid, []), now):
                recipients = ob.recipients
                if recipients is None:
                    recipients = tuple(r for r in range(self.n) if r != ob.msg.source)
                for r in recipients:
                    self.queue.setdefault(now + ob.delay, []).append((r, ob.msg))
        self.clock += 1

    def run(self) -> "World":
        limit = self.config.view_limit * (VIEW_SLOTS + 3) + 4
        while self.clock <= limit:
            self.advance_slot()
            if not self.queue and all(
                a.node.idle or a.node.crashed for a in self.agents.values()
            ):
                break
        self._post_checks()
        return self

    # -- ground-truth checks ----------------------------------------------------

    def honest_nodes(self) -> list[Node]:
        return [self.agents[i].node for i in range(self.n) if i not in self.byz]

    @property
    def observer(self) -> Node:
        return self.honest_nodes()[0]

    def _post_checks(self) -> None:
        by_view: dict[int, set[int]] = {}
        for node in self.honest_nodes():
            for rec in node.commit_records:
                by_view.setdefault(rec.view, set()).add(rec.digest)
        if any(len(ds) > 1 for ds in by_view.values()):
            self.ledger.flags["safety_violation"] = True
        for node in self.honest_nodes():
            for entry in node.view_log:
                if entry["committed"] is None and entry["vc_count"] < self.f + 1:
                    self.ledger.flags["liveness_violation"] = True
            if not node.idle and not node.crashed:
                self.ledger.flags["liveness_violation"] = True
        if not self.keystore.ledger.conserved():
            self.ledger.flags["ledger_violation"] = True


def run_world(config) -> World:
    """Build and run one scenario world to completion."""
    return World(config).run()
