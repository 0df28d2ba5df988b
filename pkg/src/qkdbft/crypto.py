"""Information-theoretic primitives.

Three layers:

* modified-Toeplitz privacy amplification (a 2-universal extractor),
* a one-time polynomial-evaluation authenticator over GF(2^w) with
  one-time-pad tag masking and fixed key consumption of 2w bits per tag,
* the temporary-signature lifecycle: keys built by privacy-amplifying
  shares drawn from every incident QKD link, signing valid for one
  delivery slot, verification after the key is disclosed.

Tag and key material are MSB-first; messages are hashed over their
length-prefixed canonical encoding (see :mod:`qkdbft.wire`) so tags are
reproducible across implementations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .bits import Bits, concat, keystream
from .keystore import InsufficientKeyError, KeyBlock, Keystore

__all__ = [
    "SecurityParams",
    "TsKey",
    "TemporarySignature",
    "privacy_amplify",
    "pa_hash64",
    "toeplitz_seed_len",
    "auth_tag",
    "auth_key_bits",
    "ts_keygen",
    "ts_share_bits",
    "ts_sign",
    "ts_verify",
    "margin_bits",
    "CryptoError",
    "KeyLifecycleError",
]


class CryptoError(Exception):
    pass


class KeyLifecycleError(CryptoError):
    """Signing with a disclosed or already-used one-time key."""


@dataclass(frozen=True, slots=True)
class SecurityParams:
    """Security knobs shared by all ITS primitives.

    epsilon         privacy-amplification security bound
    epsilon_k       authentication failure bound
    omega           authenticator field degree (tag length in bits)
    ts_key_len_bits output length L of temporary-signature keys
    """

    epsilon: float = 1e-12
    epsilon_k: float = 1e-12
    omega: int = 63
    ts_key_len_bits: int = 128

    def __post_init__(self) -> None:
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon out of range")
        if not 0 < self.epsilon_k < 1:
            raise ValueError("epsilon_k out of range")
        if self.omega < 1:
            raise ValueError("omega must be >= 1")
        # A tag needs one field point plus one mask: 2*omega key bits.
        if self.ts_key_len_bits < 2 * self.omega:
            raise ValueError("ts_key_len_bits below tag requirement 2*omega")


def margin_bits(epsilon: float) -> int:
    """Leftover-hash security margin: ceil(log2(1/epsilon))."""
    return math.ceil(math.log2(1.0 / epsilon))


# ---------------------------------------------------------------------------
# Modified-Toeplitz privacy amplification
# ---------------------------------------------------------------------------

def toeplitz_seed_len(input_len_bits: int) -> int:
    """Public seed length for an input of n bits (n - 1)."""
    return max(input_len_bits - 1, 0)


def _conv_mod2_exact(seed_arr: np.ndarray, x_arr: np.ndarray, lo: int, m: int):
    full = np.convolve(seed_arr.astype(np.int64), x_arr.astype(np.int64))
    return (full[lo : lo + m] & 1).astype(np.uint8)


def _conv_mod2_window(seed: Bits, x1: Bits, lo: int, m: int) -> np.ndarray:
    # y[i] = parity(reversed(seed)[m-1-i : m-1-i+k] AND x1); bit-parallel on ints.
    k = x1.n
    rs = Bits.from01(seed.to01()[::-1])
    x1v = x1.value
    out = np.zeros(m, dtype=np.uint8)
    for i in range(m):
        start = m - 1 - i
        window = rs[start : start + k].value
        out[i] = (window & x1v).bit_count() & 1
    return out


def _conv_mod2_fft(seed_arr: np.ndarray, x_arr: np.ndarray, lo: int, m: int):
    full = fftconvolve(seed_arr.astype(np.float64), x_arr.astype(np.float64))
    seg = full[lo : lo + m]
    ints = np.rint(seg)
    if np.max(np.abs(seg - ints)) > 0.25:
        raise CryptoError("FFT convolution lost integer precision")
    return (ints.astype(np.int64) & 1).astype(np.uint8)


def privacy_amplify(input_bits: Bits, output_len_bits: int, pa_seed: Bits) -> Bits:
    """Modified-Toeplitz hash: out = T . x1  XOR  x2.

    x1 is the first n-m input bits, x2 the last m; T is the m x (n-m)
    Toeplitz matrix defined by the first n-1 seed bits
    (T[i, j] = seed[i - j + n - m - 1]). Deterministic in (input, seed);
    2-universal over a uniform seed.
    """
    n = input_bits.n
    m = output_len_bits
    if m < 0 or m > n:
        raise CryptoError(f"output length {m} exceeds input length {n}")
    if m == 0:
        return Bits.zeros(0)
    if m == n:
        return input_bits
    if pa_seed.n < n - 1:
        raise CryptoError(f"seed too short: need {n - 1} bits, got {pa_seed.n}")
    seed = pa_seed[: n - 1]
    k = n - m
    x1 = input_bits[:k]
    x2 = input_bits[k:]
    lo = k - 1  # first row index of the needed convolution segment
    if m <= 256:
        y = _conv_mod2_window(seed, x1, lo, m)
    elif (n - 1) * k <= 1 << 24:
        y = _conv_mod2_exact(seed.bit_array(), x1.bit_array(), lo, m)
    else:
        y = _conv_mod2_fft(seed.bit_array(), x1.bit_array(), lo, m)
    return Bits.from_bit_array(y) ^ x2


def pa_hash64(data: Bits, seed_master: bytes, out_bits: int = 64) -> int:
    """Fixed-width 2-universal hash used for proposal digests and
    leader-election extraction."""
    padded = data + Bits.zeros(max(0, out_bits - data.n))
    seed = keystream(seed_master, 0, toeplitz_seed_len(padded.n))
    return privacy_amplify(padded, out_bits, seed).value


def pa_seed_for(master: bytes, input_len_bits: int) -> Bits:
    """Public PA seed stream of the exact length needed for an input size."""
    return keystream(master, 0, toeplitz_seed_len(input_len_bits))


# ---------------------------------------------------------------------------
# GF(2^w) and the one-time authenticator
# ---------------------------------------------------------------------------

def _clmul(a: int, b: int) -> int:
    r = 0
    while b:
        lsb = b & -b
        r ^= a << lsb.bit_length() - 1
        b ^= lsb
    return r


def _poly_mod(a: int, mod: int) -> int:
    dm = mod.bit_length() - 1
    while a.bit_length() - 1 >= dm:
        a ^= mod << (a.bit_length() - 1 - dm)
    return a


def _prime_factors(n: int) -> list[int]:
    out = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


class GF2Field:
    """Binary field GF(2^w) with the lexicographically smallest
    irreducible modulus of degree w."""

    _cache: dict[int, "GF2Field"] = {}

    def __init__(self, omega: int):
        self.omega = omega
        self.modulus = self._find_modulus(omega)

    @classmethod
    def get(cls, omega: int) -> "GF2Field":
        f = cls._cache.get(omega)
        if f is None:
            f = cls._cache[omega] = cls(omega)
        return f

    def mul(self, a: int, b: int) -> int:
        return _poly_mod(_clmul(a, b), self.modulus)

    def _pow_x_pow2(self, k: int, mod: int) -> int:
        # x^(2^k) mod f via repeated squaring
        r = 2  # the polynomial x
        for _ in range(k):
            r = _poly_mod(_clmul(r, r), mod)
        return r

    @staticmethod
    def _poly_gcd(a: int, b: int) -> int:
        while b:
            a, b = b, _poly_mod(a, b)
        return a

    def _is_irreducible(self, f: int, w: int) -> bool:
        # x^(2^w) == x (mod f), and gcd(x^(2^(w/p)) - x, f) == 1 for prime p | w
        if self._pow_x_pow2(w, f) != 2:
            return False
        for p in _prime_factors(w):
            g = self._poly_gcd(self._pow_x_pow2(w // p, f) ^ 2, f)
            if g != 1:
                return False
        return True

    def _find_modulus(self, w: int) -> int:
        if w == 1:
            return 0b10  # the polynomial x (degree-1 field is GF(2))
        top = 1 << w
        for low in range(1, top, 2):  # constant term must be 1
            f = top | low
            if self._is_irreducible(f, w):
                return f
        raise CryptoError(f"no irreducible polynomial of degree {w}")  # pragma: no cover


def auth_key_bits(params: SecurityParams) -> int:
    """Key bits consumed per tag: one evaluation point plus one mask."""
    return 2 * params.omega


def auth_tag(key: Bits, message: bytes, params: SecurityParams) -> tuple[Bits, int]:
    """One-time epsilon_k-almost-strongly-universal tag of ``message``.

    Polynomial evaluation over GF(2^omega) with a one-time-pad mask:
    tag = mask XOR sum_i m_i alpha^(l-i+1), with the message bit length
    prepended so zero-padding to the chunk boundary cannot alias two
    messages of different lengths. The forgery bound is
    (chunks+1)/2^omega, enforced against epsilon_k.
    """
    w = params.omega
    if key.n < 2 * w:
        raise CryptoError(f"key too short: need {2 * w} bits, got {key.n}")
    field = GF2Field.get(w)
    alpha = key[:w].value
    mask = key[w : 2 * w].value
    mbits = Bits.from_bytes(message)
    nchunks = (mbits.n + w - 1) // w if mbits.n else 0
    # degree guard: forgery probability (nchunks + 1) / 2^w must stay within epsilon_k
    if (nchunks + 2) > params.epsilon_k * (2**w):
        raise CryptoError("message too long for (omega, epsilon_k) bound")
    acc = mbits.n & ((1 << w) - 1)
    padded = mbits + Bits.zeros(nchunks * w - mbits.n)
    for i in range(nchunks):
        chunk = padded[i * w : (i + 1) * w].value
        acc = field.mul(acc, alpha) ^ chunk
    acc = field.mul(acc, alpha)
    return Bits(acc ^ mask, w), 2 * w


# ---------------------------------------------------------------------------
# Temporary signatures
# ---------------------------------------------------------------------------

@dataclass(slots=True)
class TsKey:
    """Per-(node, view, step) one-time signature key.

    The material is fixed at creation; `disclosed` flips false->true exactly
    once, after which the key may never sign again.
    """

    owner: int
    view: int
    step_index: int
    material: Bits
    disclosed: bool = False
    disclosed_at: int | None = None
    used: bool = False

    @property
    def ref(self) -> tuple[int, int]:
        return (self.view, self.step_index)

    def mark_disclosed(self, now: int) -> None:
        if not self.disclosed:
            self.disclosed = True
            self.disclosed_at = now


@dataclass(frozen=True, slots=True)
class TemporarySignature:
    tag: Bits
    signer: int
    signed_at: int
    key_ref: tuple[int, int]  # (view, step_index)


def ts_share_bits(x: int, f: int, key_len_bits: int) -> int:
    """Raw bits drawn per neighbor link for one TS key.

    ceil(L / (x - k)) with k = min(f, x - 1): even if f incident links are
    adversary-held, the raw material keeps >= L unknown bits.
    """
    if x < 1:
        raise ValueError("need at least one neighbor")
    k = min(f, x - 1)
    return -(-key_len_bits // (x - k))


def ts_keygen_from_blocks(
    owner: int,
    neighbor_blocks: list[tuple[int, KeyBlock]],
    f: int,
    params: SecurityParams,
    pa_seed: Bits,
    view: int = 0,
    step_index: int = 1,
) -> TsKey:
    """Compress per-neighbor shares (in neighbor-id order) into a TS key."""
    if not neighbor_blocks:
        raise CryptoError("owner has no neighbors")
    ordered = sorted(neighbor_blocks, key=lambda nb: nb[0])
    raw = concat(b.material for _, b in ordered)
    material = privacy_amplify(raw, params.ts_key_len_bits, pa_seed)
    return TsKey(owner, view, step_index, material)


def ts_keygen(
    owner: int,
    incident: list[tuple[int, tuple[int, int]]],
    keystore: Keystore,
    f: int,
    params: SecurityParams,
    pa_seed: Bits,
    view: int = 0,
    step_index: int = 1,
) -> TsKey:
    """Draw shares from every incident link pool and compress to L bits.

    ``incident`` is [(neighbor_id, edge), ...]. Draws are tagged
    purpose="consensus". Raises InsufficientKeyError if any pool is short.
    """
    if not incident:
        raise CryptoError("owner has no neighbors")
    x = len(incident)
    per = ts_share_bits(x, f, params.ts_key_len_bits)
    blocks = []
    for nid, edge in sorted(incident):
        blocks.append((nid, keystore.consume(edge, per, "consensus")))
    return ts_keygen_from_blocks(owner, blocks, f, params, pa_seed, view, step_index)


def ts_sign(key: TsKey, message: bytes, now: int, params: SecurityParams) -> TemporarySignature:
    if key.disclosed:
        raise KeyLifecycleError(f"key {key.ref} of node {key.owner} already disclosed")
    if key.used:
        raise KeyLifecycleError(f"key {key.ref} of node {key.owner} already signed once")
    tag, _ = auth_tag(key.material, message, params)
    key.used = True
    return TemporarySignature(tag, key.owner, now, key.ref)


def ts_verify(
    sig: TemporarySignature,
    message: bytes,
    disclosed_key: TsKey,
    disclosure_graph,
    verifier: int,
    f: int,
    params: SecurityParams,
    delta_slots: int = 1,
) -> tuple[bool, str | None]:
    """Verify a temporary signature after key disclosure.

    Accepts iff the recomputed tag matches and the disclosure graph still
    offers at least f+1 internally-disjoint signer-verifier paths. Returns
    (ok, reason) with reason in {"expired", "bad-tag", "insufficient-paths"}.
    """
    if not disclosed_key.disclosed:
        raise CryptoError("verification requires a disclosed key")
    if (
        disclosed_key.disclosed_at is not None
        and disclosed_key.disclosed_at < sig.signed_at + delta_slots
    ):
        return False, "expired"
    tag, _ = auth_tag(disclosed_key.material, message, params)
    if tag != sig.tag:
        return False, "bad-tag"
    if sig.signer != verifier:
        npaths = disclosure_graph.local_connectivity(sig.signer, verifier)
        if npaths < f + 1:
            return False, "insufficient-paths"
    return True, None
