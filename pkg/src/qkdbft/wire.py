"""Canonical message encoding.

All authenticated content is serialized with this type-tagged,
length-prefixed encoding before hashing, so tags and digests are bit-exact
across implementations:

* int      -> ``i`` + 8-byte signed big-endian
* bytes    -> ``b`` + 4-byte length + data
* str      -> ``s`` + 4-byte length + UTF-8
* Bits     -> ``B`` + 4-byte bit length + left-aligned bytes (MSB-first)
* None     -> ``n``
* sequence -> ``l`` + 4-byte count + encoded items
* mapping  -> ``d`` + 4-byte count + (key, value) pairs in sorted key order
"""

from __future__ import annotations

from .bits import Bits


def encode(obj) -> bytes:
    out = bytearray()
    _enc(obj, out)
    return bytes(out)


def _enc(obj, out: bytearray) -> None:
    if obj is None:
        out += b"n"
    elif isinstance(obj, bool):
        raise TypeError("booleans are not wire values")
    elif isinstance(obj, int):
        out += b"i"
        out += obj.to_bytes(8, "big", signed=True)
    elif isinstance(obj, bytes):
        out += b"b"
        out += len(obj).to_bytes(4, "big")
        out += obj
    elif isinstance(obj, str):
        data = obj.encode()
        out += b"s"
        out += len(data).to_bytes(4, "big")
        out += data
    elif isinstance(obj, Bits):
        out += b"B"
        out += obj.n.to_bytes(4, "big")
        out += obj.to_bytes()
    elif isinstance(obj, (list, tuple)):
        out += b"l"
        out += len(obj).to_bytes(4, "big")
        for item in obj:
            _enc(item, out)
    elif isinstance(obj, dict):
        out += b"d"
        out += len(obj).to_bytes(4, "big")
        for k in sorted(obj):
            _enc(k, out)
            _enc(obj[k], out)
    else:
        raise TypeError(f"unsupported wire type {type(obj)!r}")
