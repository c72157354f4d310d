"""Behavioural victim designs configured from a (possibly corrupted) PRR payload.

A victim compares its configured payload with the design's golden payload.
Only differences under the victim's *sensitivity mask* matter; those bits are
hashed into a deterministic fault signature that drives the misbehaviour:

* Mac / Fft: product bits selected by the signature are stuck at zero,
* blink patterns: frames are XOR-glitched,
* AES: a single round state is XOR-masked.

With no sensitive bit corrupted every victim matches its golden model exactly.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

from .aes import ROUNDS, aes_encrypt, expand_key


class VictimKind(enum.Enum):
    MAC = "mac"
    FFT = "fft"
    BLINK_ALL = "blinkall"
    BLINK_LINE = "blinkline"
    BLINK_COUNT = "blinkcount"
    AES = "aes"


BLINK_KINDS = (VictimKind.BLINK_ALL, VictimKind.BLINK_LINE, VictimKind.BLINK_COUNT)

# BlinkLine/BlinkCount never showed LED glitches under attack; model that as
# insensitivity rather than invent a physical cause.
_INSENSITIVE_BY_DEFAULT = {VictimKind.BLINK_LINE, VictimKind.BLINK_COUNT}


class UndefinedError(ZeroDivisionError):
    """Normalized error requested for an expected value of zero."""


def normalized_error(expected, computed):
    """``|expected - computed| / |expected|``; exact when both are rationals."""
    if expected == 0:
        raise UndefinedError("normalized error is undefined for expected == 0")
    if isinstance(expected, Rational) and isinstance(computed, Rational):
        return Fraction(abs(expected - computed), abs(expected))
    return abs(expected - computed) / abs(expected)


def mac_step(acc: int, v1: int, v2: int) -> int:
    return acc + v1 * v2


def fft_eval(v1: int, v2: int) -> int:
    return v1 * v2


def blink_frames(kind: VictimKind, n_steps: int) -> list[int]:
    """Golden 4-LED frame sequence for a blink design."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if kind is VictimKind.BLINK_ALL:
        return [0b1111 if i % 2 == 0 else 0b0000 for i in range(n_steps)]
    if kind is VictimKind.BLINK_LINE:
        return [1 << (i % 4) for i in range(n_steps)]
    if kind is VictimKind.BLINK_COUNT:
        return [i % 16 for i in range(n_steps)]
    raise ValueError(f"{kind} is not a blink design")


def default_sensitivity(kind: VictimKind, n_bytes: int) -> bytes:
    fill = 0x00 if kind in _INSENSITIVE_BY_DEFAULT else 0xFF
    return bytes([fill]) * n_bytes


@dataclass
class VictimInstance:
    kind: VictimKind
    config_bits: bytes
    golden_bits: bytes
    sensitivity_mask: bytes | None = None
    accumulator: int = 0
    golden_accumulator: int = 0
    _signature: bytes | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if len(self.config_bits) != len(self.golden_bits):
            raise ValueError("configured and golden payloads differ in length")
        if self.sensitivity_mask is None:
            self.sensitivity_mask = default_sensitivity(self.kind, len(self.golden_bits))
        if len(self.sensitivity_mask) != len(self.golden_bits):
            raise ValueError("sensitivity mask length must match the payload")
        n = len(self.golden_bits)
        diff = int.from_bytes(self.config_bits, "big") ^ int.from_bytes(self.golden_bits, "big")
        diff &= int.from_bytes(self.sensitivity_mask, "big")
        if diff:
            self._signature = hashlib.blake2b(diff.to_bytes(n, "big"), digest_size=32,
                                              person=self.kind.value.encode()).digest()

    @property
    def corrupted(self) -> bool:
        return self._signature is not None

    # Mac / Fft -----------------------------------------------------------

    def _stuck_mask(self) -> int:
        sig = self._signature
        # at least one of the low 7 bits, so products in [0, 100] are exposed
        return int.from_bytes(sig[:4], "little") | (1 << (sig[4] % 7))

    def _product(self, v1: int, v2: int) -> int:
        p = v1 * v2
        if self._signature is None:
            return p
        return p ^ (p & self._stuck_mask())

    def mac_step(self, v1: int, v2: int) -> int:
        """Accumulate one product; returns the value read from the unit."""
        self.golden_accumulator = mac_step(self.golden_accumulator, v1, v2)
        self.accumulator += self._product(v1, v2)
        return self.accumulator

    def fft_eval(self, v1: int, v2: int) -> int:
        return self._product(v1, v2)

    def reset(self) -> None:
        self.accumulator = self.golden_accumulator = 0

    # blink ------------------------------------------------------------------

    def blink_frames(self, n_steps: int) -> list[int]:
        frames = blink_frames(self.kind, n_steps)
        if self._signature is None:
            return frames
        glitch = [b & 0xF for b in self._signature[:8]]
        if not any(glitch):
            glitch[0] = 0b0101
        return [f ^ glitch[i % len(glitch)] for i, f in enumerate(frames)]

    # AES --------------------------------------------------------------------

    def round_masks(self) -> dict[int, bytes]:
        if self._signature is None:
            return {}
        sig = self._signature
        mask = bytearray(sig[1:17])
        if not any(mask):
            mask[0] = 1
        return {sig[0] % (ROUNDS + 1): bytes(mask)}

    def aes_encrypt(self, key: bytes, plaintext: bytes) -> bytes:
        return aes_encrypt(key, plaintext, self.round_masks())


def make_victim(kind: VictimKind | str, configured: bytes, golden: bytes,
                sensitivity: bytes | None = None) -> VictimInstance:
    return VictimInstance(VictimKind(kind), bytes(configured), bytes(golden), sensitivity)


@dataclass(frozen=True)
class ErrorReport:
    iteration: int
    v1: int
    v2: int
    expected: int
    computed: int
    error: Fraction | None

    @property
    def defined(self) -> bool:
        return self.error is not None


def _report(i, v1, v2, expected, computed) -> ErrorReport:
    try:
        e = normalized_error(expected, computed)
    except UndefinedError:
        e = None
    return ErrorReport(i, v1, v2, expected, computed, e)


def run_mac(victim: VictimInstance, stimuli) -> list[ErrorReport]:
    """Feed ``(v1, v2)`` pairs through a MAC, comparing against the golden sum."""
    out = []
    for i, (v1, v2) in enumerate(stimuli, 1):
        computed = victim.mac_step(v1, v2)
        out.append(_report(i, v1, v2, victim.golden_accumulator, computed))
    return out


def run_fft(victim: VictimInstance, stimuli) -> list[ErrorReport]:
    return [_report(i, v1, v2, fft_eval(v1, v2), victim.fft_eval(v1, v2))
            for i, (v1, v2) in enumerate(stimuli, 1)]


def uniform_stimuli(rng, n: int, low: int, high: int) -> list[tuple[int, int]]:
    """``n`` integer input pairs drawn uniformly from ``[low, high]``."""
    pairs = rng.integers(low, high + 1, size=(n, 2))
    return [(int(a), int(b)) for a, b in pairs]


REPORT_COLUMNS = ("iteration", "v1", "v2", "expected", "computed", "error")


def reports_to_csv(reports: list[ErrorReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        err = "undefined" if r.error is None else f"{float(r.error):.6f}"
        w.writerow([r.iteration, r.v1, r.v2, r.expected, r.computed, err])
    return buf.getvalue()


def golden_aes(key: bytes):
    """Encryptor closure with a cached key schedule."""
    rk = expand_key(key)
    return lambda pt, masks=None: aes_encrypt(key, pt, masks, rk)
