"""Proposal planning/validation and leader election."""

import dataclasses

from qkdbft.bits import Bits, derive_seed, keystream
from qkdbft.consensus import (
    KEY_INDEX,
    MAX_KEY_INDEX,
    VIEW_SLOTS,
    PlanEntry,
    Proposal,
    Step,
    build_proposal,
    elect_leader,
    path_edges,
    proposal_digest,
    validate_proposal,
)
from qkdbft.keystore import Keystore
from qkdbft.topology import Graph, max_disjoint_paths


def test_key_index_schedule():
    assert KEY_INDEX[Step.PROPOSE] == 1
    assert KEY_INDEX[Step.VOTE] == 1  # the leader's Propose doubles as its vote
    assert KEY_INDEX[Step.VERIFY] == 2
    assert KEY_INDEX[Step.REVOTE] == 3
    assert KEY_INDEX[Step.REVOTE_VERIFY] == 4
    assert KEY_INDEX[Step.COMMIT] == 5
    assert KEY_INDEX[Step.KC_VERIFY] == 6
    assert max(KEY_INDEX.values()) <= MAX_KEY_INDEX
    assert VIEW_SLOTS == 7


def test_path_edges():
    assert path_edges((1, 0, 5, 4)) == [(0, 1), (0, 5), (4, 5)]


def _ring6():
    g = Graph.ring(6)
    ks = Keystore()
    for e in sorted(g.edges):
        ks.provision(e, 1_000_000, derive_seed("p", *e))
    return g, ks


def test_build_proposal_greedy_plan():
    g, ks = _ring6()
    book = [(0, 1, 4, 10_000)]
    prop = build_proposal(book, g, 1, ks, 300_000, 0)
    assert prop.view == 0
    assert len(prop.entries) == 1
    e = prop.entries[0]
    assert e.paths == max_disjoint_paths(g, 1, 4).paths
    assert e.amount_bits == 5_000  # ceil split over 2 disjoint paths
    ok, reason = validate_proposal(prop, 0, book, g, 1, ks, 300_000)
    assert (ok, reason) == (True, None)


def test_build_proposal_respects_caps_and_feasibility():
    g, ks = _ring6()
    # cap binds: 2 paths x cap bits each
    prop = build_proposal([(0, 1, 4, 10_000)], g, 1, ks, 3_000, 0)
    assert prop.entries[0].amount_bits == 3_000
    # infeasible under f=2 (only 2 disjoint paths): demand skipped
    assert build_proposal([(0, 1, 4, 10_000)], g, 2, ks, 300_000, 0).entries == ()
    # drained poolZero: skipped
    ks2 = Keystore()
    for e in sorted(g.edges):
        ks2.provision(e, 1_000_000, derive_seed("p", *e))
    ks2.consume((0, 1), 1_000_000, "delivery")
    assert build_proposal([(0, 1, 4, 10_000)], g, 1, ks2, 300_000, 0).entries == ()


def test_build_proposal_shared_edge_accounting():
    g, ks = _ring6()
    # both demands use edge (0,1) and (0,5); the second entry sees the
    # first one's usage and shrinks to the remaining cap
    book = [(0, 1, 4, 400_000), (1, 1, 0, 400_000)]
    prop = build_proposal(book, g, 1, ks, 300_000, 0)
    by_idx = {e.demand_idx: e for e in prop.entries}
    assert by_idx[0].amount_bits == 200_000
    usage_01 = sum(e.amount_bits for e in prop.entries
                   if (0, 1) in [tuple(sorted(p)) for path in e.paths
                                 for p in zip(path, path[1:])])
    assert usage_01 <= 300_000
    ok, _ = validate_proposal(prop, 0, book, g, 1, ks, 300_000)
    assert ok


def test_validate_proposal_rejection_reasons():
    g, ks = _ring6()
    book = [(0, 1, 4, 10_000)]
    good = build_proposal(book, g, 1, ks, 300_000, 0)
    e = good.entries[0]

    def why(prop, view=0, b=None):
        return validate_proposal(prop, view, b or book, g, 1, ks, 300_000)[1]

    assert why(good, view=1) == "wrong-view"
    assert why(Proposal(0, (dataclasses.replace(e, demand_idx=9),))) == "forged-demand"
    assert why(Proposal(0, (e, e))) == "forged-demand"  # duplicate entry
    over = dataclasses.replace(e, amount_bits=5_001)  # beyond the ceil-split slack
    assert why(Proposal(0, (over,))) == "forged-demand"
    nonedge = dataclasses.replace(e, paths=((1, 3, 4), e.paths[1]))
    assert why(Proposal(0, (nonedge,))) == "bad-route"
    noncanon = dataclasses.replace(e, paths=tuple(reversed(e.paths)))
    assert why(Proposal(0, (noncanon,))) == "bad-route"
    shared = dataclasses.replace(e, paths=((1, 0, 5, 4), (1, 0, 5, 4)))
    assert why(Proposal(0, (shared,))) in ("not-disjoint", "bad-route")
    few = dataclasses.replace(e, paths=(e.paths[0],))
    assert why(Proposal(0, (few,))) == "too-few-paths"
    zero = dataclasses.replace(e, amount_bits=0)
    assert why(Proposal(0, (zero,))) == "unequal-amounts"
    big_book = [(0, 1, 4, 10_000_000)]
    over_cap = dataclasses.replace(e, amount_bits=300_001)
    assert why(Proposal(0, (over_cap,)), b=big_book) == "over-budget"


def test_proposal_roundtrip_and_digest():
    g, ks = _ring6()
    prop = build_proposal([(0, 1, 4, 10_000)], g, 1, ks, 300_000, 3)
    obj = prop.to_obj()
    assert Proposal.from_obj(obj) == prop
    master = derive_seed("dg")
    d = proposal_digest(obj, master)
    assert 0 <= d < 1 << 63
    assert d == proposal_digest(Proposal.from_obj(obj).to_obj(), master)
    other = build_proposal([(0, 1, 4, 2_000)], g, 1, ks, 300_000, 3)
    assert proposal_digest(other.to_obj(), master) != d


def test_elect_leader_determinism_and_fallback():
    master = derive_seed("el")
    keys = {i: keystream(derive_seed("k", i), 0, 128) for i in range(4)}
    lead = elect_leader(5, keys, 4, master)
    assert lead == elect_leader(5, dict(keys), 4, master)
    assert 0 <= lead < 4
    # no disclosures -> round robin
    assert elect_leader(5, {i: None for i in range(4)}, 4, master) == 1
    assert elect_leader(8, {}, 4, master) == 0
    # any single contribution changes the draw (extraction actually reads keys)
    keys2 = dict(keys)
    keys2[2] = keys[2] ^ Bits(1, 128)
    draws = {elect_leader(v, keys, 4, master) == elect_leader(v, keys2, 4, master)
             for v in range(32)}
    assert False in draws
