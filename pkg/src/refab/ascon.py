"""Ascon-Hash256 (NIST SP 800-232): 320-bit state, 64-bit rate, p12 permutation."""

from __future__ import annotations

from functools import lru_cache

_MASK = 0xFFFFFFFFFFFFFFFF
_RATE = 8
DIGEST_BYTES = 32

_ROUND_CONSTANTS = tuple(0xF0 - r * 0x0F for r in range(12))

# Ascon-Hash256 IV: version 2, a = b = 12 rounds, 256-bit tag, 8-byte rate
_IV = 0x0000080100CC0002


def _ror(x: int, n: int) -> int:
    return ((x >> n) | (x << (64 - n))) & _MASK


def permutation(s: list[int], rounds: int = 12) -> None:
    """Apply the Ascon permutation in place to the five state words."""
    x0, x1, x2, x3, x4 = s
    for c in _ROUND_CONSTANTS[12 - rounds:]:
        x2 ^= c
        # S-box layer, bitsliced
        x0 ^= x4
        x4 ^= x3
        x2 ^= x1
        t0 = ~x0 & x1
        t1 = ~x1 & x2
        t2 = ~x2 & x3
        t3 = ~x3 & x4
        t4 = ~x4 & x0
        x0 ^= t1
        x1 ^= t2
        x2 ^= t3
        x3 ^= t4
        x4 ^= t0
        x1 ^= x0
        x0 ^= x4
        x3 ^= x2
        x2 = ~x2 & _MASK
        # linear diffusion layer
        x0 ^= _ror(x0, 19) ^ _ror(x0, 28)
        x1 ^= _ror(x1, 61) ^ _ror(x1, 39)
        x2 ^= _ror(x2, 1) ^ _ror(x2, 6)
        x3 ^= _ror(x3, 10) ^ _ror(x3, 17)
        x4 ^= _ror(x4, 7) ^ _ror(x4, 41)
    s[:] = [x0 & _MASK, x1 & _MASK, x2 & _MASK, x3 & _MASK, x4 & _MASK]


def _initial_state() -> tuple[int, ...]:
    s = [_IV, 0, 0, 0, 0]
    permutation(s)
    return tuple(s)


_INIT = _initial_state()


def ascon_hash(message: bytes) -> bytes:
    """Return the 32-byte Ascon-Hash256 digest of ``message``."""
    s = list(_INIT)
    padded = bytes(message) + b"\x01" + bytes(_RATE - 1 - len(message) % _RATE)
    for off in range(0, len(padded), _RATE):
        s[0] ^= int.from_bytes(padded[off:off + _RATE], "little")
        permutation(s)
    out = []
    for i in range(DIGEST_BYTES // _RATE):
        out.append(s[0].to_bytes(_RATE, "little"))
        if i < DIGEST_BYTES // _RATE - 1:
            permutation(s)
    return b"".join(out)


@lru_cache(maxsize=1 << 16)
def block_digest(block: bytes) -> bytes:
    """Memoised ``ascon_hash`` for short, frequently re-hashed blocks."""
    return ascon_hash(block)
