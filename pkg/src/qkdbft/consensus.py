"""Byzantine agreement on multipath key-distribution plans.

Each view runs a fixed six-step exchange (Propose, Vote, Verify, Revote,
RevoteVerify, Commit) followed by a key-closure verification round, with
every step taking exactly one delivery slot of length Delta. A view
therefore spans seven slots; a failed view is detected by its end and the
next view starts on the same boundary, so one Byzantine leader costs
exactly one extra view. An 8-Delta leader timer remains as a backstop for
non-lockstep delivery.

Messages are signed with per-(view, step) temporary keys; the key for step
i is disclosed inside the step-(i+1) message, so tallies are provisional on
receipt and finalized one slot later once the signature can be checked
against the disclosed key and the disclosure graph still offers f+1
disjoint signer-verifier paths.

The next leader is extracted from the Commit-step keys disclosed during
closure verification: a disclosure only counts if it verifies that node's
Commit tag, which binds the election input to messages sent before anyone
could bias it. With no valid disclosures (a failed view) the leader falls
back to round-robin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import wire
from .bits import Bits, concat, derive_seed, keystream
from .crypto import (
    SecurityParams,
    TemporarySignature,
    TsKey,
    auth_tag,
    pa_hash64,
    toeplitz_seed_len,
    ts_keygen,
    ts_share_bits,
    ts_sign,
    ts_verify,
)
from .distribution import KeyClosure, kc_transmit, make_key_closure, pa_digest
from .keystore import InsufficientKeyError, Keystore, norm_edge
from .topology import Graph, max_disjoint_paths

__all__ = [
    "Step",
    "KEY_INDEX",
    "Demand",
    "PlanEntry",
    "Proposal",
    "ProtocolMessage",
    "Outbound",
    "CommitRecord",
    "ViewState",
    "NetContext",
    "Node",
    "build_proposal",
    "validate_proposal",
    "proposal_digest",
    "elect_leader",
    "message_body",
]

VIEW_SLOTS = 7          # Propose .. Commit, KC-verify, finalize/close
RECOVERY_SLOTS = 2      # closure repair plus repaired-key confirmation
TIMER_SLOTS = 8         # backstop leader timer


class Step:
    PROPOSE = "propose"
    VOTE = "vote"
    VERIFY = "verify"
    REVOTE = "revote"
    REVOTE_VERIFY = "revote-verify"
    COMMIT = "commit"
    KC_VERIFY = "kc-verify"
    VIEW_CHANGE = "view-change"
    RECOVERY_KC = "recovery-kc"
    RECOVERY_CONFIRM = "recovery-confirm"


# Temporary-key index used to sign each step. View-change messages may be
# signed with whichever index matches the phase they replace.
KEY_INDEX = {
    Step.PROPOSE: 1,
    Step.VOTE: 1,
    Step.VERIFY: 2,
    Step.REVOTE: 3,
    Step.REVOTE_VERIFY: 4,
    Step.COMMIT: 5,
    Step.KC_VERIFY: 6,
    Step.RECOVERY_KC: 7,
    Step.RECOVERY_CONFIRM: 8,
}
MAX_KEY_INDEX = 8


@dataclass(frozen=True, slots=True)
class Demand:
    """A request for end-to-end key between two nodes."""

    idx: int
    src: int
    dst: int
    amount_bits: int
    injected: bool = False  # submitted mid-run by an adversary


@dataclass(frozen=True, slots=True)
class PlanEntry:
    demand_idx: int
    src: int
    dst: int
    paths: tuple[tuple[int, ...], ...]
    amount_bits: int  # per path; all paths of an entry carry equal amounts

    def to_obj(self):
        return [
            self.demand_idx,
            self.src,
            self.dst,
            [list(p) for p in self.paths],
            self.amount_bits,
        ]

    @classmethod
    def from_obj(cls, obj) -> "PlanEntry":
        di, src, dst, paths, amount = obj
        return cls(int(di), int(src), int(dst), tuple(tuple(p) for p in paths), int(amount))


@dataclass(frozen=True, slots=True)
class Proposal:
    view: int
    entries: tuple[PlanEntry, ...]

    def to_obj(self):
        return ["plan", self.view, [e.to_obj() for e in self.entries]]

    @classmethod
    def from_obj(cls, obj) -> "Proposal":
        tag, view, entries = obj
        if tag != "plan":
            raise ValueError("not a plan object")
        return cls(int(view), tuple(PlanEntry.from_obj(e) for e in entries))


def message_body(step: str, view: int, source: int, payload) -> bytes:
    """Canonical signed representation of a protocol message."""
    return wire.encode([step, view, source, payload])


@dataclass(frozen=True, slots=True)
class ProtocolMessage:
    step: str
    payload: object
    view: int
    ts: TemporarySignature
    disclosures: tuple[tuple[int, int, Bits], ...]  # (view, key index, material)
    source: int
    sent_at: int

    def body(self) -> bytes:
        return message_body(self.step, self.view, self.source, self.payload)


@dataclass(frozen=True, slots=True)
class Outbound:
    """A send request handed to the event loop."""

    msg: ProtocolMessage
    recipients: tuple[int, ...] | None = None  # None = broadcast to all nodes
    delay: int = 1


@dataclass(frozen=True, slots=True)
class CommitRecord:
    view: int
    digest: int
    node: int
    time: int


# ---------------------------------------------------------------------------
# Proposal construction and validation
# ---------------------------------------------------------------------------

def path_edges(path: tuple[int, ...]):
    return [norm_edge((path[i], path[i + 1])) for i in range(len(path) - 1)]


def build_proposal(
    book: list[tuple[int, int, int, int]],
    graph: Graph,
    f: int,
    keystore: Keystore,
    round_cap_bits: int,
    view: int,
) -> Proposal:
    """Greedy per-view plan over the open demand book.

    ``book`` rows are (demand_idx, src, dst, remaining_bits). Each served
    demand gets its full set of f+1-or-more disjoint paths with equal
    per-path amounts, clamped by the per-link per-view cap and the
    remaining pool budget of every link it touches (shared links account
    for earlier entries in the same plan).
    """
    usage: dict[tuple[int, int], int] = {}
    entries = []
    for idx, src, dst, remaining in sorted(book):
        if remaining <= 0:
            continue
        ps = max_disjoint_paths(graph, src, dst)
        beta = len(ps)
        if beta < f + 1:
            continue
        budget = None
        edges_by_path = [path_edges(p) for p in ps.paths]
        for edges in edges_by_path:
            for e in edges:
                avail = min(round_cap_bits, keystore.available(e)) - usage.get(e, 0)
                budget = avail if budget is None else min(budget, avail)
        per = min(-(-remaining // beta), budget)
        if per <= 0:
            continue
        for edges in edges_by_path:
            for e in edges:
                usage[e] = usage.get(e, 0) + per
        entries.append(PlanEntry(idx, src, dst, ps.paths, per))
    return Proposal(view, tuple(entries))


def validate_proposal(
    proposal: Proposal,
    view: int,
    book: list[tuple[int, int, int, int]],
    graph: Graph,
    f: int,
    keystore: Keystore,
    round_cap_bits: int,
) -> tuple[bool, str | None]:
    """Deterministic acceptance test every replica runs on a leader plan.

    Reasons: wrong-view, forged-demand (unknown or over-claimed demand),
    bad-route (non-edges or a route differing from the canonical disjoint
    path set), not-disjoint, too-few-paths, unequal-amounts, over-budget.
    """
    if proposal.view != view:
        return False, "wrong-view"
    known = {idx: (src, dst, rem) for idx, src, dst, rem in book}
    usage: dict[tuple[int, int], int] = {}
    seen_idx = set()
    for e in proposal.entries:
        if e.demand_idx in seen_idx:
            return False, "forged-demand"
        seen_idx.add(e.demand_idx)
        row = known.get(e.demand_idx)
        if row is None or (e.src, e.dst) != row[:2]:
            return False, "forged-demand"
        for p in e.paths:
            if len(p) < 2 or p[0] != e.src or p[-1] != e.dst or len(set(p)) != len(p):
                return False, "bad-route"
            for u, v in zip(p, p[1:]):
                if not graph.has_edge(u, v):
                    return False, "bad-route"
        internal_seen: set[int] = set()
        for p in e.paths:
            internal = set(p[1:-1])
            if internal & internal_seen:
                return False, "not-disjoint"
            internal_seen |= internal
        if len(e.paths) < f + 1:
            return False, "too-few-paths"
        if e.amount_bits <= 0:
            return False, "unequal-amounts"
        # beta * per may exceed the remainder only by the ceil-split slack
        if e.amount_bits * len(e.paths) - row[2] >= len(e.paths):
            return False, "forged-demand"
        for p in e.paths:
            for edge in path_edges(p):
                usage[edge] = usage.get(edge, 0) + e.amount_bits
        canonical = max_disjoint_paths(graph, e.src, e.dst)
        if e.paths != canonical.paths:
            return False, "bad-route"
    for edge, used in usage.items():
        if used > min(round_cap_bits, keystore.available(edge)):
            return False, "over-budget"
    return True, None


def proposal_digest(obj, master: bytes) -> int:
    """63-bit 2-universal digest of a plan's canonical encoding (63 rather
    than 64 bits so digests stay within the wire format's signed ints)."""
    h = pa_hash64(Bits.from_bytes(wire.encode(obj)), derive_seed(master, "digest"))
    return h & ((1 << 63) - 1)


def elect_leader(view: int, disclosed_keys: dict[int, Bits | None], n: int, master: bytes) -> int:
    """Leader of ``view`` from the previous view's Commit-step keys.

    The keys (in node-id order, absentees zero-filled) are compressed to 64
    bits by privacy amplification and reduced mod N; any single honest
    contribution already makes the extraction unbiased. A view with no
    valid disclosures falls back to round-robin.
    """
    real = {i: k for i, k in disclosed_keys.items() if k is not None and k.n > 0}
    if not real:
        return view % n
    width = max(k.n for k in real.values())
    parts = [real.get(i, Bits.zeros(width)) for i in range(n)]
    data = concat(Bits.zeros(width - p.n) + p for p in parts)
    return pa_hash64(data, derive_seed(master, "elect", view)) % n


# ---------------------------------------------------------------------------
# Node runtime
# ---------------------------------------------------------------------------

@dataclass
class NetContext:
    """Static protocol environment shared by all replicas.

    ``delivery_blocks`` and ``recovery_blocks`` are event-loop callbacks
    that draw link key blocks for a committed plan; they are idempotent per
    (view, plan) so every replica sees the same draw.
    """

    graph: Graph
    f: int
    params: SecurityParams
    keystore: Keystore
    round_cap_bits: int
    master: bytes
    demands: list[Demand]
    delivery_blocks: object = None
    recovery_blocks: object = None
    view_limit: int = 8
    min_views: int = 1
    trace: object = None
    stats: dict = field(default_factory=lambda: {"tags_signed": 0, "msgs_sent": 0})

    @property
    def n_nodes(self) -> int:
        return self.graph.node_count

    def log(self, now, node, event, **fields):
        if self.trace is not None:
            self.trace(dict(t=now, node=node, event=event, **fields))


@dataclass
class ViewState:
    view: int
    leader: int
    view_start: int
    deadline: int
    proposal_payload: object = None
    vote_digest: int | None = None
    vote_tag: Bits | None = None
    confirmed: int | None = None
    confirmed_proposal: Proposal | None = None
    committed: int | None = None
    failed: bool = False
    vc_sent: bool = False
    path_status: dict = field(default_factory=dict)
    recovery_pending: tuple = ()
    recovery_started: bool = False
    recovery_secrets: dict = field(default_factory=dict)
    my_secrets: dict = field(default_factory=dict)
    kc_aggregates: dict = field(default_factory=dict)


class Node:
    """One honest replica; driven by the event loop in whole slots.

    ``handle_message`` only records deliveries (and disclosed keys);
    ``on_slot`` runs finalization plus the phase action for the current
    slot and returns the messages to send.
    """

    def __init__(self, nid: int, ctx: NetContext):
        self.nid = nid
        self.ctx = ctx
        self.view = 0
        self.idle = False
        self.crashed = False
        self.state: ViewState | None = None
        self.keys: dict[tuple[int, int], TsKey] = {}
        self.disclosed: dict[tuple[int, int, int], Bits] = {}
        self.pending: list[ProtocolMessage] = []
        self.finalized: dict[tuple[int, str], dict[int, ProtocolMessage]] = {}
        self.equivocators: dict[tuple[int, str], set[int]] = {}
        self.evidence: list[tuple] = []
        self.remaining: dict[int, int] = {}
        self.demand_status: dict[int, str] = {}
        self.outcomes: list[dict] = []
        self.view_log: list[dict] = []
        self.commit_records: list[CommitRecord] = []
        self.resolved_at: int | None = None

    # -- inbound ------------------------------------------------------------

    def handle_message(self, msg: ProtocolMessage, now: int) -> None:
        if self.crashed:
            return
        if now - msg.sent_at > 1:
            self.ctx.log(now, self.nid, "drop-late", src=msg.source, step=msg.step)
            return
        for v, idx, material in msg.disclosures:
            key = (msg.source, v, idx)
            prev = self.disclosed.get(key)
            if prev is not None:
                if prev != material:
                    self.evidence.append(("conflicting-disclosure", msg.source, v, idx))
                continue
            self.disclosed[key] = material
        self.pending.append(msg)

    # -- slot driver ----------------------------------------------------------

    def on_slot(self, now: int) -> list[Outbound]:
        if self.crashed or self.idle:
            return []
        self._finalize(now)
        if self.state is None:
            self._sync_demands()
            self._begin_view(0, 0, now)
            return self._phase_propose(now)
        st = self.state
        p = now - st.view_start
        if st.recovery_started:
            if p == VIEW_SLOTS + 1:
                return self._phase_recovery_confirm(now)
            if p == VIEW_SLOTS + RECOVERY_SLOTS:
                self._evaluate_recovery(now)
                return self._turn_view(now)
            return []
        if p == 1:
            return self._phase_vote(now)
        if p == 2:
            return self._phase_verify(now)
        if p == 3:
            return self._phase_revote(now)
        if p == 4:
            return self._phase_revote_verify(now)
        if p == 5:
            return self._phase_commit(now)
        if p == 6:
            return self._phase_kc_verify(now)
        if p == VIEW_SLOTS:
            self._evaluate_delivery(now)
            if self.state.recovery_pending:
                return self._start_recovery(now)
            return self._turn_view(now)
        return []

    def on_timer(self, now: int) -> list[Outbound]:
        """Backstop: demand a view change if a view stalls past 8 Delta.

        Under lockstep delivery every view closes at 7 Delta (9 with
        recovery, which has already committed), so this never fires there.
        """
        st = self.state
        if st is None or self.crashed or self.idle:
            return []
        if now < st.deadline or st.committed is not None or st.vc_sent:
            return []
        for idx in range(2, MAX_KEY_INDEX + 1):
            key = self.keys.get((self.view, idx))
            if key is not None and not key.used and not key.disclosed:
                return self._view_change("timer", idx, now)
        return []

    # -- verification pipeline ----------------------------------------------

    def _finalize(self, now: int) -> None:
        keep = []
        for msg in self.pending:
            res = self._try_verify(msg)
            if res is None:
                if msg.view >= self.view - 1:
                    keep.append(msg)
                continue
            ok, reason = res
            if not ok:
                self.evidence.append((reason, msg.source, msg.view, msg.step))
                self.ctx.log(now, self.nid, "reject", src=msg.source, step=msg.step, reason=reason)
                continue
            self._accept(msg)
        self.pending = keep

    def _try_verify(self, msg: ProtocolMessage):
        v, idx = msg.ts.key_ref
        expected = KEY_INDEX.get(msg.step)
        valid_idx = idx == expected or (msg.step == Step.VIEW_CHANGE and 1 <= idx <= MAX_KEY_INDEX)
        if msg.ts.signer != msg.source or v != msg.view or not valid_idx:
            return False, "bad-key-ref"
        material = self.disclosed.get((msg.source, v, idx))
        if material is None:
            return None
        key = TsKey(msg.source, v, idx, material, disclosed=True)
        return ts_verify(
            msg.ts,
            msg.body(),
            key,
            self._disclosure_graph(msg.view),
            self.nid,
            self.ctx.f,
            self.ctx.params,
        )

    def _disclosure_graph(self, view: int):
        # The deployment topology is static and sources are hop-authenticated,
        # so transferability is judged against the known graph. Restricting to
        # currently-heard senders would strand honest nodes whose only extra
        # disjoint path runs through a silent Byzantine neighbor.
        return self.ctx.graph

    def _accept(self, msg: ProtocolMessage) -> None:
        slot = self.finalized.setdefault((msg.view, msg.step), {})
        prev = slot.get(msg.source)
        if prev is not None:
            if prev.body() != msg.body():
                self.equivocators.setdefault((msg.view, msg.step), set()).add(msg.source)
                self.evidence.append(("equivocation", msg.source, msg.view, msg.step))
            return
        slot[msg.source] = msg

    def _tallied(self, view: int, step: str) -> list[ProtocolMessage]:
        """Finalized messages for (view, step), minus proven equivocators."""
        bad = self.equivocators.get((view, step), set())
        return [m for s, m in sorted(self.finalized.get((view, step), {}).items()) if s not in bad]

    def _provisional(self, view: int, step: str) -> list[ProtocolMessage]:
        """One message per source, finalized or still awaiting disclosure."""
        by_src = dict(self.finalized.get((view, step), {}))
        for m in self.pending:
            if m.view == view and m.step == step and m.source not in by_src:
                by_src[m.source] = m
        return [by_src[s] for s in sorted(by_src)]

    # -- sending --------------------------------------------------------------

    def _send(self, step: str, payload, key_idx: int, now: int) -> list[Outbound]:
        key = self.keys.get((self.view, key_idx))
        if key is None or key.used or key.disclosed:
            self.ctx.log(now, self.nid, "no-key", step=step, idx=key_idx)
            return []
        disclosures = []
        for (v, idx), k in sorted(self.keys.items()):
            stale = v < self.view
            early = v == self.view and idx < key_idx
            if (stale or early) and not k.disclosed:
                k.mark_disclosed(now)
                disclosures.append((v, idx, k.material))
                self.disclosed[(self.nid, v, idx)] = k.material
        sig = ts_sign(key, message_body(step, self.view, self.nid, payload), now, self.ctx.params)
        self.ctx.stats["tags_signed"] += 1
        self.ctx.stats["msgs_sent"] += 1
        msg = ProtocolMessage(step, payload, self.view, sig, tuple(disclosures), self.nid, now)
        # broadcast is N-1 unicasts; a node tallies its own message directly
        self.finalized.setdefault((self.view, step), {})[self.nid] = msg
        return [Outbound(msg)]

    def _view_change(self, reason: str, key_idx: int, now: int, evidence=None) -> list[Outbound]:
        st = self.state
        st.failed = True
        st.vc_sent = True
        self.ctx.log(now, self.nid, "view-change", view=self.view, reason=reason)
        payload = {"reason": reason, "evidence": evidence}
        return self._send(Step.VIEW_CHANGE, payload, key_idx, now)

    # -- demand bookkeeping ---------------------------------------------------

    def _sync_demands(self) -> None:
        from .topology import local_connectivity

        for d in self.ctx.demands:
            if d.idx in self.demand_status:
                continue
            self.remaining[d.idx] = d.amount_bits
            beta = local_connectivity(self.ctx.graph, d.src, d.dst)
            self.demand_status[d.idx] = "infeasible" if beta <= self.ctx.f else "pending"

    def _book(self) -> list[tuple[int, int, int, int]]:
        rows = []
        for d in self.ctx.demands:
            if self.demand_status.get(d.idx) == "pending" and self.remaining[d.idx] > 0:
                rows.append((d.idx, d.src, d.dst, self.remaining[d.idx]))
        return rows

    def _all_resolved(self) -> bool:
        return all(
            self.demand_status[d.idx] != "pending"
            for d in self.ctx.demands
            if not d.injected
        )

    # -- view lifecycle ---------------------------------------------------------

    def _begin_view(self, view: int, leader: int, now: int) -> None:
        self.view = view
        self.state = ViewState(view, leader, now, now + TIMER_SLOTS)
        try:
            self._keygen(view, range(1, 7), now)
        except InsufficientKeyError:
            self.crashed = True
            self.ctx.log(now, self.nid, "crash", reason="consensus-pool-exhausted")

    def _keygen(self, view: int, indices, now: int) -> None:
        incident = [
            (nbr, (self.nid, nbr)) for nbr in self.ctx.graph.neighbors(self.nid)
        ]
        x = len(incident)
        raw_len = x * ts_share_bits(x, self.ctx.f, self.ctx.params.ts_key_len_bits)
        for idx in indices:
            if (view, idx) in self.keys:
                continue
            seed = keystream(
                derive_seed(self.ctx.master, "tskey", view, idx, self.nid),
                0,
                toeplitz_seed_len(raw_len),
            )
            self.keys[(view, idx)] = ts_keygen(
                self.nid, incident, self.ctx.keystore, self.ctx.f,
                self.ctx.params, seed, view, idx,
            )

    def _phase_propose(self, now: int) -> list[Outbound]:
        if self.crashed or self.state.leader != self.nid:
            return []
        proposal = build_proposal(
            self._book(), self.ctx.graph, self.ctx.f,
            self.ctx.keystore, self.ctx.round_cap_bits, self.view,
        )
        return self._send(Step.PROPOSE, proposal.to_obj(), 1, now)

    def _phase_vote(self, now: int) -> list[Outbound]:
        st = self.state
        payloads = []
        for m in self._provisional(self.view, Step.PROPOSE):
            if m.source == st.leader:
                payloads.append((m.payload, m.ts.tag))
        if len(payloads) != 1:
            if len(payloads) > 1:
                self.evidence.append(("equivocation", st.leader, self.view, Step.PROPOSE))
            return []
        obj, leader_tag = payloads[0]
        try:
            proposal = Proposal.from_obj(obj)
        except (ValueError, TypeError):
            return []
        ok, reason = validate_proposal(
            proposal, self.view, self._book(), self.ctx.graph,
            self.ctx.f, self.ctx.keystore, self.ctx.round_cap_bits,
        )
        if not ok:
            self.ctx.log(now, self.nid, "reject-proposal", reason=reason)
            return []
        st.proposal_payload = obj
        st.vote_digest = proposal_digest(obj, self.ctx.master)
        if self.nid == st.leader:
            # the leader's Propose doubles as its vote (both use key index 1)
            st.vote_tag = leader_tag
            return []
        out = self._send(Step.VOTE, {"proposal": obj, "leader_tag": leader_tag}, 1, now)
        if out:
            st.vote_tag = out[0].msg.ts.tag
        return out

    def _phase_verify(self, now: int) -> list[Outbound]:
        st = self.state
        tally: dict[int, int] = {}
        for m in self._provisional(self.view, Step.VOTE):
            try:
                d = proposal_digest(m.payload["proposal"], self.ctx.master)
            except (TypeError, KeyError):
                continue
            tally[d] = tally.get(d, 0) + 1
        for m in self._provisional(self.view, Step.PROPOSE):
            if m.source == st.leader:
                d = proposal_digest(m.payload, self.ctx.master)
                tally[d] = tally.get(d, 0) + 1
        if max(tally.values(), default=0) >= 2 * self.ctx.f + 1:
            return self._send(Step.VERIFY, None, 2, now)
        return self._view_change("insufficient-votes", 2, now)

    def _phase_revote(self, now: int) -> list[Outbound]:
        st = self.state
        if st.vc_sent:
            return []
        k1 = self.disclosed.get((st.leader, self.view, 1))
        if k1 is None:
            return self._view_change("no-disclosure", 3, now)
        candidates: dict[int, tuple] = {}
        for m in self._tallied(self.view, Step.PROPOSE):
            if m.source == st.leader:
                candidates[proposal_digest(m.payload, self.ctx.master)] = (m.payload, m.ts.tag)
        for m in self._tallied(self.view, Step.VOTE):
            try:
                obj, tag = m.payload["proposal"], m.payload["leader_tag"]
            except (TypeError, KeyError):
                continue
            if not isinstance(tag, Bits):
                continue
            body = message_body(Step.PROPOSE, self.view, st.leader, obj)
            want, _ = auth_tag(k1, body, self.ctx.params)
            if want == tag:
                candidates[proposal_digest(obj, self.ctx.master)] = (obj, tag)
        if len(candidates) > 1:
            ev = [[d, obj] for d, (obj, _) in sorted(candidates.items())]
            return self._view_change("equivocation", 3, now, evidence=ev)
        if not candidates:
            return self._view_change("no-valid-proposal", 3, now)
        digest, (obj, _) = next(iter(candidates.items()))
        try:
            proposal = Proposal.from_obj(obj)
            ok, _reason = validate_proposal(
                proposal, self.view, self._book(), self.ctx.graph,
                self.ctx.f, self.ctx.keystore, self.ctx.round_cap_bits,
            )
        except (ValueError, TypeError):
            ok, proposal = False, None
        if ok:
            st.confirmed = digest
            st.confirmed_proposal = proposal
        payload = {"digest": st.confirmed, "prev": st.vote_tag}
        return self._send(Step.REVOTE, payload, 3, now)

    def _phase_revote_verify(self, now: int) -> list[Outbound]:
        if self.state.vc_sent:
            return []
        if len(self._provisional(self.view, Step.REVOTE)) >= 2 * self.ctx.f + 1:
            return self._send(Step.REVOTE_VERIFY, None, 4, now)
        return self._view_change("insufficient-revotes", 4, now)

    def _phase_commit(self, now: int) -> list[Outbound]:
        st = self.state
        if st.vc_sent:
            return []
        tally: dict[int, int] = {}
        for m in self._tallied(self.view, Step.REVOTE):
            d = m.payload.get("digest") if isinstance(m.payload, dict) else None
            if isinstance(d, int):
                tally[d] = tally.get(d, 0) + 1
        if st.confirmed is None or tally.get(st.confirmed, 0) < self.ctx.f + 1:
            return []
        st.committed = st.confirmed
        self.commit_records.append(CommitRecord(self.view, st.committed, self.nid, now))
        blocks = self.ctx.delivery_blocks(self.view, st.confirmed_proposal)
        kcs = []
        for e in st.confirmed_proposal.entries:
            for i, path in enumerate(e.paths):
                if self.nid in path[1:-1]:
                    j = path.index(self.nid)
                    bl = blocks[(e.demand_idx, i)]
                    kc = make_key_closure(self.nid, bl[j - 1], bl[j], (e.demand_idx, i))
                    kcs.append([e.demand_idx, i, kc.material])
        return self._send(Step.COMMIT, {"digest": st.committed, "kcs": kcs}, 5, now)

    def _phase_kc_verify(self, now: int) -> list[Outbound]:
        st = self.state
        if st.vc_sent:
            return []
        if st.committed is None:
            return self._view_change("no-commit-quorum", 6, now)
        blocks = self.ctx.delivery_blocks(self.view, st.confirmed_proposal)
        closures: dict[tuple[int, int], dict[int, Bits]] = {}
        for m in self._provisional(self.view, Step.COMMIT):
            for item in (m.payload or {}).get("kcs", []) if isinstance(m.payload, dict) else []:
                try:
                    d, i, material = item
                except (TypeError, ValueError):
                    continue
                closures.setdefault((d, i), {}).setdefault(m.source, material)
        cal, conf = [], []
        for e in st.confirmed_proposal.entries:
            for i, path in enumerate(e.paths):
                agg = self._aggregate(path, closures.get((e.demand_idx, i), {}),
                                      (e.demand_idx, i), e.amount_bits)
                st.kc_aggregates[(e.demand_idx, i)] = agg
                digest = None
                if agg is not None:
                    digest = pa_digest(agg, self._seed("cal", e.demand_idx, i, agg.n))
                cal.append([e.demand_idx, i, digest])
                for role, endpoint in ((0, e.src), (1, e.dst)):
                    if endpoint != self.nid:
                        continue
                    sec = self._endpoint_secret(blocks[(e.demand_idx, i)], agg, role)
                    st.my_secrets[(e.demand_idx, i, role)] = sec
                    cdig = None
                    if sec is not None:
                        cdig = pa_digest(sec, self._seed("conf", e.demand_idx, i, sec.n))
                    conf.append([e.demand_idx, i, role, cdig])
        return self._send(Step.KC_VERIFY, {"cal": cal, "conf": conf}, 6, now)

    def _aggregate(self, path, by_node: dict[int, Bits], path_id, amount: int) -> Bits | None:
        internal = path[1:-1]
        closures = []
        for v in internal:
            mat = by_node.get(v)
            if not isinstance(mat, Bits) or mat.n != amount:
                return None
            closures.append(KeyClosure(v, path_id, mat))
        try:
            return kc_transmit(path, closures)
        except Exception:
            return None

    def _endpoint_secret(self, path_blocks, agg: Bits | None, role: int) -> Bits | None:
        if role == 0:
            return path_blocks[0].material
        if agg is None:
            return None
        if agg.n == 0:  # one-hop path: the shared link block is the secret
            return path_blocks[-1].material
        return agg ^ path_blocks[-1].material

    def _seed(self, label: str, d: int, i: int, nbits: int) -> Bits:
        pad = max(nbits, 64)
        return keystream(
            derive_seed(self.ctx.master, label, self.view, d, i),
            0,
            toeplitz_seed_len(pad),
        )

    # -- delivery evaluation and recovery --------------------------------------

    def _evaluate_delivery(self, now: int) -> None:
        st = self.state
        if st.committed is None:
            return
        cal_votes: dict[tuple[int, int], list] = {}
        confs: dict[tuple[int, int, int], object] = {}
        for m in self._provisional(self.view, Step.KC_VERIFY):
            if not isinstance(m.payload, dict):
                continue
            for item in m.payload.get("cal", []):
                try:
                    d, i, digest = item
                except (TypeError, ValueError):
                    continue
                cal_votes.setdefault((d, i), []).append(digest)
            for item in m.payload.get("conf", []):
                try:
                    d, i, role, digest = item
                except (TypeError, ValueError):
                    continue
                e = self._entry(d)
                if e is not None and m.source == (e.src if role == 0 else e.dst):
                    confs.setdefault((d, i, role), digest)
        mismatched = []
        for e in st.confirmed_proposal.entries:
            for i in range(len(e.paths)):
                votes = [v for v in cal_votes.get((e.demand_idx, i), []) if isinstance(v, Bits)]
                best = max((votes.count(v) for v in set(votes)), default=0)
                sconf = confs.get((e.demand_idx, i, 0))
                dconf = confs.get((e.demand_idx, i, 1))
                if best < self.ctx.f + 1 or sconf is None or dconf is None:
                    status = "abort"
                elif sconf != dconf:
                    status = "mismatch"
                    mismatched.append((e.demand_idx, i))
                else:
                    status = "ok"
                st.path_status[(e.demand_idx, i)] = status
        st.recovery_pending = tuple(sorted(mismatched))

    def _entry(self, demand_idx: int) -> PlanEntry | None:
        p = self.state.confirmed_proposal
        if p is None:
            return None
        for e in p.entries:
            if e.demand_idx == demand_idx:
                return e
        return None

    def _start_recovery(self, now: int) -> list[Outbound]:
        st = self.state
        st.recovery_started = True
        try:
            self._keygen(self.view, (7, 8), now)
        except InsufficientKeyError:
            self.crashed = True
            return []
        kcs = []
        for d, i in st.recovery_pending:
            e = self._entry(d)
            path = e.paths[i]
            if self.nid not in path[1:-1]:
                continue
            j = path.index(self.nid)
            for direction in (0, 1):
                bl = self.ctx.recovery_blocks(self.view, d, i, direction, path, e.amount_bits)
                kc = make_key_closure(self.nid, bl[j - 1], bl[j], (d, i))
                kcs.append([d, i, direction, kc.material])
        return self._send(Step.RECOVERY_KC, {"kcs": kcs}, 7, now)

    def _phase_recovery_confirm(self, now: int) -> list[Outbound]:
        st = self.state
        closures: dict[tuple[int, int, int], dict[int, Bits]] = {}
        for m in self._provisional(self.view, Step.RECOVERY_KC):
            for item in (m.payload or {}).get("kcs", []) if isinstance(m.payload, dict) else []:
                try:
                    d, i, direction, material = item
                except (TypeError, ValueError):
                    continue
                closures.setdefault((d, i, direction), {}).setdefault(m.source, material)
        conf = []
        for d, i in st.recovery_pending:
            e = self._entry(d)
            if self.nid not in (e.src, e.dst):
                continue
            role = 0 if self.nid == e.src else 1
            path = e.paths[i]
            segs = []
            for direction in (0, 1):
                bl = self.ctx.recovery_blocks(self.view, d, i, direction, path, e.amount_bits)
                agg = self._aggregate(path, closures.get((d, i, direction), {}),
                                      (d, i), e.amount_bits)
                # forward secret anchors at the src link, backward at the dst
                # link, so each endpoint holds one directly and derives the other
                if agg is None:
                    segs = None
                    break
                if direction == 0:
                    segs.append(bl[0].material if role == 0 else agg ^ bl[-1].material)
                else:
                    segs.append(agg ^ bl[0].material if role == 0 else bl[-1].material)
            digest = None
            if segs is not None:
                sec = segs[0] ^ segs[1]
                st.recovery_secrets[(d, i, role)] = sec
                digest = pa_digest(sec, self._seed("rconf", d, i, sec.n))
            conf.append([d, i, role, digest])
        return self._send(Step.RECOVERY_CONFIRM, {"conf": conf}, 8, now)

    def _evaluate_recovery(self, now: int) -> None:
        st = self.state
        confs: dict[tuple[int, int, int], object] = {}
        for m in self._provisional(self.view, Step.RECOVERY_CONFIRM):
            if not isinstance(m.payload, dict):
                continue
            for item in m.payload.get("conf", []):
                try:
                    d, i, role, digest = item
                except (TypeError, ValueError):
                    continue
                e = self._entry(d)
                if e is not None and m.source == (e.src if role == 0 else e.dst):
                    confs.setdefault((d, i, role), digest)
        for d, i in st.recovery_pending:
            s, t = confs.get((d, i, 0)), confs.get((d, i, 1))
            if isinstance(s, Bits) and s == t:
                st.path_status[(d, i)] = "ok-exposed"
            else:
                st.path_status[(d, i)] = "failed-recovery"

    # -- view close -------------------------------------------------------------

    def _turn_view(self, now: int) -> list[Outbound]:
        st = self.state
        vc_count = len(self._provisional(self.view, Step.VIEW_CHANGE))
        served_entries = []
        if st.committed is not None and st.confirmed_proposal is not None:
            for e in st.confirmed_proposal.entries:
                statuses = [st.path_status.get((e.demand_idx, i), "abort")
                            for i in range(len(e.paths))]
                if any(s == "failed-recovery" for s in statuses):
                    self.demand_status[e.demand_idx] = "aborted"
                    result = "aborted"
                elif all(s in ("ok", "ok-exposed") for s in statuses):
                    beta = len(e.paths)
                    bits = min(self.remaining[e.demand_idx], e.amount_bits * beta)
                    self.remaining[e.demand_idx] -= bits
                    if self.remaining[e.demand_idx] == 0:
                        self.demand_status[e.demand_idx] = "served"
                    result = "delivered"
                    served_entries.append(e.demand_idx)
                else:
                    result = "retry"
                secrets = {}
                for i in range(len(e.paths)):
                    for role in (0, 1):
                        sec = st.recovery_secrets.get((e.demand_idx, i, role))
                        if sec is None:
                            sec = st.my_secrets.get((e.demand_idx, i, role))
                        if sec is not None:
                            secrets[(i, role)] = sec
                self.outcomes.append({
                    "view": self.view,
                    "demand": e.demand_idx,
                    "src": e.src,
                    "dst": e.dst,
                    "per_path_bits": e.amount_bits,
                    "paths": e.paths,
                    "result": result,
                    "exposed": tuple(i for i in range(len(e.paths))
                                     if st.path_status.get((e.demand_idx, i)) == "ok-exposed"),
                    "secrets": secrets,
                })
        self.view_log.append({
            "view": self.view,
            "leader": st.leader,
            "committed": st.committed,
            "failed": st.failed,
            "vc_count": vc_count,
            "closed_at": now,
        })
        k5 = {
            m.source: self.disclosed.get((m.source, self.view, 5))
            for m in self._tallied(self.view, Step.COMMIT)
        }
        next_leader = elect_leader(self.view + 1, k5, self.ctx.n_nodes, self.ctx.master)
        self._sync_demands()
        if self._all_resolved() and self.resolved_at is None:
            self.resolved_at = now
        if (self._all_resolved() and len(self.view_log) >= self.ctx.min_views) or (
            self.view + 1 >= self.ctx.view_limit
        ):
            self.idle = True
            for d in self.ctx.demands:
                if self.demand_status.get(d.idx) == "pending":
                    self.demand_status[d.idx] = "unserved"
            self.ctx.log(now, self.nid, "idle", view=self.view)
            return []
        self._begin_view(self.view + 1, next_leader, now)
        return self._phase_propose(now)
