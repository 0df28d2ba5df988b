"""Link key pools and the consumption ledger."""

import pytest

from qkdbft.bits import derive_seed
from qkdbft.keystore import (
    DuplicatePoolError,
    InsufficientKeyError,
    Keystore,
    norm_edge,
)


def test_norm_edge():
    assert norm_edge((3, 1)) == (1, 3)
    assert norm_edge((1, 3)) == (1, 3)
    with pytest.raises(ValueError):
        norm_edge((2, 2))


def _store():
    ks = Keystore()
    ks.provision((1, 0), 1000, derive_seed("s", 0, 1))
    return ks


def test_both_endpoints_see_identical_material():
    ks = _store()
    a = ks.pool((0, 1)).peek(100, 64)
    b = ks.pool((1, 0)).peek(100, 64)  # either orientation
    assert a == b


def test_consume_advances_offsets_and_never_reuses():
    ks = _store()
    b1 = ks.consume((0, 1), 100, "consensus")
    b2 = ks.consume((0, 1), 100, "delivery")
    assert (b1.offset_bits, b2.offset_bits) == (0, 100)
    assert b1.material != b2.material
    assert b1.material == ks.pool((0, 1)).peek(0, 100)
    assert ks.available((0, 1)) == 800


def test_exhaustion_raises_not_truncates():
    ks = _store()
    ks.consume((0, 1), 999, "delivery")
    with pytest.raises(InsufficientKeyError):
        ks.consume((0, 1), 2, "delivery")
    assert ks.available((0, 1)) == 1  # failed draw consumed nothing
    ks.consume((0, 1), 1, "delivery")


def test_purpose_tagging_and_conservation():
    ks = _store()
    ks.provision((1, 2), 500, derive_seed("s", 1, 2))
    ks.consume((0, 1), 64, "consensus")
    ks.consume((1, 2), 32, "delivery")
    led = ks.ledger
    assert led.consensus_bits == 64
    assert led.delivery_bits == 32
    assert led.total_bits == 96
    assert led.conserved()
    assert led.by_edge() == {
        (0, 1): {"consensus": 64, "delivery": 0},
        (1, 2): {"consensus": 0, "delivery": 32},
    }


def test_bad_inputs():
    ks = _store()
    with pytest.raises(DuplicatePoolError):
        ks.provision((0, 1), 10, b"x")
    with pytest.raises(ValueError):
        ks.consume((0, 1), 8, "entertainment")
    with pytest.raises(ValueError):
        ks.consume((0, 1), -1, "delivery")
