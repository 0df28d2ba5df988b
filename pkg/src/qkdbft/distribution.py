"""Key-closure algebra and end-to-end key post-processing.

A key closure is the XOR of the in-link and out-link key blocks at an
internal node of a distribution path. XORing all closures on a path
telescopes to (first-link key) XOR (last-link key), which lets the two
endpoints agree on the first-link block as the per-path secret without any
relay learning it from the broadcast alone.

Per-path segments are independent key material concatenated at the
endpoints (not an n-of-n XOR share): compromising some paths leaks a
proportional fraction, which is exactly what the post-processing privacy
amplification removes.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .bits import Bits, concat
from .crypto import SecurityParams, margin_bits, privacy_amplify

CALIBRATION_DIGEST_BITS = 64


class DistributionError(Exception):
    pass


class DemandAborted(DistributionError):
    """Fewer than f+1 consistent calibrations, or a failed repair."""


@dataclass(frozen=True, slots=True)
class KeyClosure:
    node: int
    path_id: tuple
    material: Bits


@dataclass(frozen=True, slots=True)
class Calibration:
    path_id: tuple
    digest: Bits
    reporter: int


@dataclass(frozen=True, slots=True)
class EndToEndKey:
    demand: tuple[int, int]
    pre_pa_bits: Bits
    final_bits: Bits
    leaked_fraction: Fraction


@dataclass(frozen=True, slots=True)
class RecoveryPlan:
    """Rerun the listed paths' closure transmission, in both directions."""

    demand: tuple[int, int]
    path_ids: tuple[tuple, ...]


def make_key_closure(node: int, in_block, out_block, path_id: tuple = ()) -> KeyClosure:
    """XOR of the key blocks on a relay's two path links."""
    if in_block.material.n != out_block.material.n:
        raise DistributionError("in/out block length mismatch")
    return KeyClosure(node, path_id, in_block.material ^ out_block.material)


def kc_transmit(path: tuple[int, ...], closures: list[KeyClosure]) -> Bits:
    """XOR-aggregate of all internal-node closures on one path.

    Algebraically equals (first-link key) XOR (last-link key); a one-hop
    path has no internal nodes and an empty aggregate.
    """
    internal = list(path[1:-1])
    by_node = {}
    for c in closures:
        if c.node in by_node:
            raise DistributionError(f"duplicate closure for node {c.node}")
        by_node[c.node] = c
    if sorted(by_node) != sorted(internal):
        raise DistributionError(
            f"closures {sorted(by_node)} do not match internal nodes {sorted(internal)}"
        )
    if not internal:
        return Bits.zeros(0)
    agg = by_node[internal[0]].material
    for v in internal[1:]:
        agg = agg ^ by_node[v].material
    return agg


def calibrate(path_id: tuple, aggregate: Bits, pa_seed: Bits, reporter: int = -1) -> Calibration:
    """Broadcastable digest of a path's closure aggregate."""
    return Calibration(path_id, pa_digest(aggregate, pa_seed), reporter)


def pa_digest(data: Bits, pa_seed: Bits, out_bits: int = CALIBRATION_DIGEST_BITS) -> Bits:
    """2-universal digest via privacy amplification of the padded input."""
    padded = data + Bits.zeros(max(0, out_bits - data.n))
    return privacy_amplify(padded, out_bits, pa_seed)


def post_process(
    pre_pa: Bits,
    leaked_fraction: Fraction,
    pa_seed: Bits,
    params: SecurityParams,
) -> Bits:
    """Compress out the eavesdropped fraction plus the epsilon margin.

    Output length = floor(n * (1 - leaked)) - margin(epsilon); both
    endpoints run this on identical inputs and obtain identical bits. A
    non-positive length yields no key.
    """
    if not 0 <= leaked_fraction <= 1:
        raise DistributionError("leaked fraction out of range")
    out_len = int(pre_pa.n * (1 - leaked_fraction)) - margin_bits(params.epsilon)
    if out_len <= 0:
        return Bits.zeros(0)
    return privacy_amplify(pre_pa, out_len, pa_seed)


@dataclass(frozen=True, slots=True)
class PathOutcome:
    """Per-path result as seen by the two endpoints."""

    path_id: tuple
    path: tuple[int, ...]
    amount_bits: int
    src_segment: Bits
    dst_segment: Bits


def finalize_demand(
    demand: tuple[int, int],
    per_path: list[PathOutcome],
    calibrations: list[Calibration],
    f: int,
    leaked_paths: set,
    pa_seed: Bits,
    params: SecurityParams,
) -> EndToEndKey | RecoveryPlan:
    """Combine per-path segments into the end-to-end key.

    Every path needs at least f+1 consistent calibration digests, else the
    demand aborts (DemandAborted). If the endpoints disagree on any path
    segment, a RecoveryPlan for those paths is returned instead; otherwise
    segments are concatenated in path order and privacy-amplified with the
    leaked fraction supplied by the simulator's omniscient ledger.
    """
    mismatched = []
    for po in per_path:
        cals = [c.digest for c in calibrations if c.path_id == po.path_id]
        best = max((cals.count(d) for d in set(cals)), default=0)
        if best < f + 1:
            raise DemandAborted(f"path {po.path_id}: no f+1 consistent calibrations")
        if po.src_segment != po.dst_segment:
            mismatched.append(po.path_id)
    if mismatched:
        return RecoveryPlan(demand, tuple(mismatched))
    pre = concat(po.src_segment for po in per_path)
    frac = Fraction(len([po for po in per_path if po.path_id in leaked_paths]), len(per_path))
    final = post_process(pre, frac, pa_seed, params)
    return EndToEndKey(demand, pre, final, frac)
