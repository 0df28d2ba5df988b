"""Simulated point-to-point QKD link key pools.

Each link between two nodes holds a pool of pre-established key bits. Key
material is a seeded pseudorandom stream rather than recorded raw bits: the
simulation needs reproducibility and both-endpoint agreement, not physical
secrecy. Consumption is tracked per purpose ("consensus" vs "delivery") so
reports can separate protocol overhead from payload key distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bits import Bits, keystream

PURPOSES = ("consensus", "delivery")

Edge = tuple[int, int]


class KeystoreError(Exception):
    pass


class InsufficientKeyError(KeystoreError):
    """Pool exhaustion. Never silently truncated: resource-contention
    attacks work precisely by draining pools, so the effect must surface."""


class DuplicatePoolError(KeystoreError):
    pass


def norm_edge(edge) -> Edge:
    u, v = edge
    if u == v:
        raise ValueError("self-loop edge")
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True, slots=True)
class KeyBlock:
    """A contiguous, never-reused range of a link's key stream."""

    edge: Edge
    offset_bits: int
    length_bits: int
    material: Bits

    def __post_init__(self) -> None:
        if self.material.n != self.length_bits:
            raise ValueError("material length mismatch")


class KeyPool:
    """Key pool for one undirected link."""

    def __init__(self, edge, capacity_bits: int, seed: bytes):
        if capacity_bits < 0:
            raise ValueError("negative capacity")
        self.edge = norm_edge(edge)
        self.capacity_bits = capacity_bits
        self.seed = seed
        self.consumed_bits = 0
        self.by_purpose: dict[str, int] = {p: 0 for p in PURPOSES}

    @property
    def available_bits(self) -> int:
        return self.capacity_bits - self.consumed_bits

    def peek(self, offset_bits: int, length_bits: int) -> Bits:
        """Material for (edge, offset, length); identical at both endpoints."""
        return keystream(self.seed, offset_bits, length_bits)

    def consume(self, length_bits: int, purpose: str) -> KeyBlock:
        if purpose not in PURPOSES:
            raise ValueError(f"unknown purpose {purpose!r}")
        if length_bits < 0:
            raise ValueError("negative length")
        if self.consumed_bits + length_bits > self.capacity_bits:
            raise InsufficientKeyError(
                f"link {self.edge}: need {length_bits} bits, "
                f"{self.available_bits} available"
            )
        offset = self.consumed_bits
        block = KeyBlock(self.edge, offset, length_bits, self.peek(offset, length_bits))
        self.consumed_bits += length_bits
        self.by_purpose[purpose] += length_bits
        return block


class ConsumptionLedger:
    """Read-only aggregation over a keystore's pools."""

    def __init__(self, pools: dict[Edge, KeyPool]):
        self._pools = pools

    def bits(self, purpose: str) -> int:
        return sum(p.by_purpose[purpose] for p in self._pools.values())

    @property
    def consensus_bits(self) -> int:
        return self.bits("consensus")

    @property
    def delivery_bits(self) -> int:
        return self.bits("delivery")

    @property
    def total_bits(self) -> int:
        return sum(p.consumed_bits for p in self._pools.values())

    def by_edge(self) -> dict[Edge, dict[str, int]]:
        return {e: dict(p.by_purpose) for e, p in sorted(self._pools.items())}

    def conserved(self) -> bool:
        """Tagged totals must equal total consumed bits across pools."""
        return self.consensus_bits + self.delivery_bits == self.total_bits


class Keystore:
    """All link pools of one scenario, owned by the event loop."""

    def __init__(self) -> None:
        self.pools: dict[Edge, KeyPool] = {}
        self.ledger = ConsumptionLedger(self.pools)

    def provision(self, edge, capacity_bits: int, seed: bytes) -> KeyPool:
        e = norm_edge(edge)
        if e in self.pools:
            raise DuplicatePoolError(f"pool for link {e} already provisioned")
        pool = KeyPool(e, capacity_bits, seed)
        self.pools[e] = pool
        return pool

    def pool(self, edge) -> KeyPool:
        return self.pools[norm_edge(edge)]

    def available(self, edge) -> int:
        return self.pool(edge).available_bits

    def consume(self, edge, length_bits: int, purpose: str) -> KeyBlock:
        return self.pool(edge).consume(length_bits, purpose)
