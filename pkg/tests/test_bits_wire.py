"""Bit-string primitives and the canonical wire encoding."""

import random

import pytest

from qkdbft.bits import Bits, concat, derive_seed, keystream
from qkdbft import wire


def test_bits_roundtrips():
    rng = random.Random(1)
    for _ in range(200):
        n = rng.randrange(0, 100)
        b = Bits(rng.getrandbits(n) if n else 0, n)
        assert Bits.from_bytes(b.to_bytes(), n) == b
        assert Bits.from01(b.to01()) == b
        assert Bits.from_bit_array(b.bit_array()) == b
        assert len(b) == n


def test_bits_msb_first_convention():
    b = Bits.from01("10110")
    assert b.value == 0b10110
    assert b.to_bytes() == bytes([0b10110000])  # left-aligned
    assert list(b.bit_array()) == [1, 0, 1, 1, 0]
    assert b[1:4] == Bits.from01("011")


def test_bits_ops():
    a, b = Bits.from01("1010"), Bits.from01("0110")
    assert (a ^ b).to01() == "1100"
    assert (a + b).to01() == "10100110"
    assert concat([a, b, Bits.zeros(0)]) == a + b
    assert a.popcount() == 2
    with pytest.raises(ValueError):
        a ^ Bits.zeros(5)
    with pytest.raises(ValueError):
        Bits(4, 2)  # value needs 3 bits
    with pytest.raises(ValueError):
        Bits(0, -1)


def test_keystream_random_access():
    seed = derive_seed("test", 42)
    whole = keystream(seed, 0, 4096)
    rng = random.Random(2)
    for _ in range(50):
        off = rng.randrange(0, 4000)
        n = rng.randrange(0, 4096 - off)
        assert keystream(seed, off, n) == whole[off : off + n]
    assert keystream(seed, 17, 0) == Bits.zeros(0)


def test_derive_seed_injective_on_structure():
    # length-prefixing keeps ("ab","c") and ("a","bc") apart
    assert derive_seed("ab", "c") != derive_seed("a", "bc")
    assert derive_seed(1) != derive_seed("1")
    assert derive_seed(b"x") == derive_seed(b"x")


def test_wire_type_tags():
    assert wire.encode(None) == b"n"
    assert wire.encode(5) == b"i" + (5).to_bytes(8, "big", signed=True)
    assert wire.encode(-5) == b"i" + (-5).to_bytes(8, "big", signed=True)
    assert wire.encode(b"hi") == b"b" + (2).to_bytes(4, "big") + b"hi"
    assert wire.encode("hi") == b"s" + (2).to_bytes(4, "big") + b"hi"
    b = Bits.from01("101")
    assert wire.encode(b) == b"B" + (3).to_bytes(4, "big") + bytes([0b10100000])
    assert wire.encode([1]) == b"l" + (1).to_bytes(4, "big") + wire.encode(1)
    assert wire.encode((1,)) == wire.encode([1])


def test_wire_dict_canonical_order():
    assert wire.encode({"b": 1, "a": 2}) == wire.encode({"a": 2, "b": 1})


def test_wire_rejects_bools_and_unknown_types():
    with pytest.raises(TypeError):
        wire.encode(True)
    with pytest.raises(TypeError):
        wire.encode(3.5)


def test_wire_unambiguous():
    # container boundaries are explicit: [[1],2] differs from [1,[2]] and [1,2]
    forms = [[[1], 2], [1, [2]], [1, 2], [[1, 2]]]
    encs = {wire.encode(f) for f in forms}
    assert len(encs) == len(forms)
