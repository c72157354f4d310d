"""Byte-oriented AES-128 single-block encryption with optional round-state faults."""

from __future__ import annotations


def _xtime(a: int) -> int:
    a <<= 1
    return (a ^ 0x11B) if a & 0x100 else a


def _gmul(a: int, b: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        a = _xtime(a)
        b >>= 1
    return r


def _build_sbox() -> bytes:
    box = bytearray(256)
    for x in range(256):
        inv = 0
        if x:
            # x^254 is the multiplicative inverse in GF(2^8)
            inv, base, e = 1, x, 254
            while e:
                if e & 1:
                    inv = _gmul(inv, base)
                base = _gmul(base, base)
                e >>= 1
        y = inv
        for sh in (1, 2, 3, 4):
            y ^= ((inv << sh) | (inv >> (8 - sh))) & 0xFF
        box[x] = y ^ 0x63
    return bytes(box)


SBOX = _build_sbox()
_MUL2 = bytes(_xtime(i) & 0xFF for i in range(256))
_MUL3 = bytes((_xtime(i) ^ i) & 0xFF for i in range(256))
_RCON = (0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36)

ROUNDS = 10


def expand_key(key: bytes) -> list[bytes]:
    """Eleven 16-byte round keys."""
    if len(key) != 16:
        raise ValueError("AES-128 needs a 16-byte key")
    w = [list(key[i:i + 4]) for i in range(0, 16, 4)]
    for i in range(4, 44):
        t = list(w[i - 1])
        if i % 4 == 0:
            t = [SBOX[b] for b in t[1:] + t[:1]]
            t[0] ^= _RCON[i // 4 - 1]
        w.append([a ^ b for a, b in zip(w[i - 4], t)])
    return [bytes(sum(w[4 * r:4 * r + 4], [])) for r in range(ROUNDS + 1)]


def _sub_shift(s: bytearray) -> bytearray:
    # column-major state: byte (row r, col c) sits at 4c + r
    return bytearray(SBOX[s[(4 * (c + r) + r) % 16]] for c in range(4) for r in range(4))


def _mix(s: bytearray) -> bytearray:
    out = bytearray(16)
    for c in range(0, 16, 4):
        a0, a1, a2, a3 = s[c:c + 4]
        out[c] = _MUL2[a0] ^ _MUL3[a1] ^ a2 ^ a3
        out[c + 1] = a0 ^ _MUL2[a1] ^ _MUL3[a2] ^ a3
        out[c + 2] = a0 ^ a1 ^ _MUL2[a2] ^ _MUL3[a3]
        out[c + 3] = _MUL3[a0] ^ a1 ^ a2 ^ _MUL2[a3]
    return out


def _xor_into(s: bytearray, k: bytes) -> None:
    for i in range(16):
        s[i] ^= k[i]


def aes_encrypt(key: bytes, plaintext: bytes, round_masks: dict[int, bytes] | None = None,
                round_keys: list[bytes] | None = None) -> bytes:
    """Encrypt one block.

    ``round_masks[r]`` is XORed into the state right after round ``r``
    (``r = 0`` is the initial AddRoundKey), modelling a corrupted datapath.
    """
    if len(plaintext) != 16:
        raise ValueError("AES block must be 16 bytes")
    rk = round_keys if round_keys is not None else expand_key(key)
    masks = round_masks or {}
    s = bytearray(plaintext)
    _xor_into(s, rk[0])
    if 0 in masks:
        _xor_into(s, masks[0])
    for r in range(1, ROUNDS + 1):
        s = _sub_shift(s)
        if r != ROUNDS:
            s = _mix(s)
        _xor_into(s, rk[r])
        if r in masks:
            _xor_into(s, masks[r])
    return bytes(s)
