"""Bit strings and deterministic keystreams.

All bit strings are MSB-first: bit 0 of a :class:`Bits` value is the most
significant bit of ``value``. Byte encodings are left-aligned (the final
byte is zero-padded on the right).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_BLOCK_BITS = 256


@dataclass(frozen=True, slots=True)
class Bits:
    """Immutable bit string with an explicit length."""

    value: int
    n: int

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("negative bit length")
        if self.value < 0 or self.value >> self.n:
            raise ValueError("value out of range for bit length")

    @classmethod
    def zeros(cls, n: int) -> "Bits":
        return cls(0, n)

    @classmethod
    def from_bytes(cls, data: bytes, n: int | None = None) -> "Bits":
        if n is None:
            n = 8 * len(data)
        if n > 8 * len(data):
            raise ValueError("not enough bytes for requested length")
        if n == 0:
            return cls(0, 0)
        return cls(int.from_bytes(data, "big") >> (8 * len(data) - n), n)

    @classmethod
    def from01(cls, s: str) -> "Bits":
        return cls(int(s, 2) if s else 0, len(s))

    @classmethod
    def from_bit_array(cls, arr) -> "Bits":
        arr = np.asarray(arr, dtype=np.uint8) & 1
        if arr.size == 0:
            return cls(0, 0)
        return cls.from_bytes(np.packbits(arr).tobytes(), int(arr.size))

    def __len__(self) -> int:
        return self.n

    def __bool__(self) -> bool:
        return self.n > 0

    def __xor__(self, other: "Bits") -> "Bits":
        if self.n != other.n:
            raise ValueError(f"length mismatch: {self.n} vs {other.n}")
        return Bits(self.value ^ other.value, self.n)

    def __add__(self, other: "Bits") -> "Bits":
        """Concatenation, self first."""
        return Bits((self.value << other.n) | other.value, self.n + other.n)

    def __getitem__(self, key: slice) -> "Bits":
        if not isinstance(key, slice):
            raise TypeError("only slice indexing is supported")
        start, stop, step = key.indices(self.n)
        if step != 1:
            raise ValueError("step slicing unsupported")
        stop = max(stop, start)
        width = stop - start
        return Bits((self.value >> (self.n - stop)) & ((1 << width) - 1), width)

    def to_bytes(self) -> bytes:
        nbytes = (self.n + 7) // 8
        return (self.value << (8 * nbytes - self.n)).to_bytes(nbytes, "big")

    def to01(self) -> str:
        return format(self.value, f"0{self.n}b") if self.n else ""

    def bit_array(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0, dtype=np.uint8)
        return np.unpackbits(np.frombuffer(self.to_bytes(), dtype=np.uint8))[: self.n]

    def popcount(self) -> int:
        return self.value.bit_count()


def concat(parts) -> Bits:
    value = 0
    n = 0
    for p in parts:
        value = (value << p.n) | p.value
        n += p.n
    return Bits(value, n)


def derive_seed(*parts) -> bytes:
    """Deterministic 32-byte seed from a label path of str/int/bytes parts."""
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, bytes):
            b = p
        elif isinstance(p, str):
            b = p.encode()
        elif isinstance(p, int):
            b = p.to_bytes(16, "big", signed=True)
        else:
            raise TypeError(f"unsupported seed part type {type(p)!r}")
        h.update(len(b).to_bytes(4, "big"))
        h.update(b)
    return h.digest()


def keystream(seed: bytes, offset_bits: int, n_bits: int) -> Bits:
    """Random-access deterministic keystream (SHA-256 in counter mode).

    The material at a given (seed, offset, length) is a pure function of its
    arguments, so independent readers derive identical bits.
    """
    if n_bits == 0:
        return Bits.zeros(0)
    first = offset_bits // _BLOCK_BITS
    last = (offset_bits + n_bits - 1) // _BLOCK_BITS
    chunks = [
        hashlib.sha256(seed + i.to_bytes(8, "big")).digest()
        for i in range(first, last + 1)
    ]
    whole = Bits.from_bytes(b"".join(chunks))
    lo = offset_bits - first * _BLOCK_BITS
    return whole[lo : lo + n_bits]
