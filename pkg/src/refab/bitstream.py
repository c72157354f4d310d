"""Partial bitstream container, 128-bit block segmentation and CRC-32 field.

The on-disk container ("RFB1") is a small tagged binary wrapper that stands
in for the ``.h`` header files a reconfiguration driver embeds.  Layout,
all integers little-endian::

    magic "RFB1" | name_len:u16 | name | payload_len:u32 | flags:u8 | crc:u32 | payload

``flags`` bit 0 is ``crc_enabled``.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

BLOCK_BITS = 128
BLOCK_BYTES = BLOCK_BITS // 8

MAGIC = b"RFB1"
FLAG_CRC = 0x01


class BitstreamError(ValueError):
    """Base class for container and segmentation errors."""


class EmptyBitstream(BitstreamError):
    pass


class NotAContainer(BitstreamError):
    pass


class Truncated(BitstreamError):
    pass


def compute_crc(payload: bytes) -> int:
    """Standard reflected CRC-32 (IEEE 802.3), as a 32-bit unsigned int."""
    return zlib.crc32(payload) & 0xFFFFFFFF


@dataclass(frozen=True)
class Block:
    index: int
    bits: bytes

    def __post_init__(self):
        if len(self.bits) != BLOCK_BYTES:
            raise BitstreamError(f"block {self.index} is {len(self.bits)} bytes, expected {BLOCK_BYTES}")


@dataclass(frozen=True)
class PartialBitstream:
    """An immutable partial bitstream.

    ``crc_value`` is computed from the payload when left as ``None``.  A
    bitstream corrupted in transit keeps the CRC of the original, which is
    exactly what makes the mismatch observable.
    """

    name: str
    payload: bytes
    crc_enabled: bool = True
    crc_value: int = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not isinstance(self.payload, bytes):
            object.__setattr__(self, "payload", bytes(self.payload))
        if len(self.payload) == 0:
            raise EmptyBitstream(f"bitstream {self.name!r} has an empty payload")
        if self.crc_value is None:
            object.__setattr__(self, "crc_value", compute_crc(self.payload))

    @property
    def size_bytes(self) -> int:
        return len(self.payload)

    @property
    def size_bits(self) -> int:
        return 8 * len(self.payload)

    @property
    def block_count(self) -> int:
        return -(-self.size_bits // BLOCK_BITS)

    def crc_ok(self) -> bool:
        return compute_crc(self.payload) == self.crc_value

    def with_payload(self, payload: bytes) -> PartialBitstream:
        """Same metadata (including the stored CRC) around a different payload."""
        return PartialBitstream(self.name, bytes(payload), self.crc_enabled, self.crc_value)


def split_blocks(bs: PartialBitstream) -> list[Block]:
    payload = bs.payload
    if not payload:
        raise EmptyBitstream(bs.name)
    pad = (-len(payload)) % BLOCK_BYTES
    padded = payload + bytes(pad)
    return [Block(i, padded[off:off + BLOCK_BYTES]) for i, off in enumerate(range(0, len(padded), BLOCK_BYTES))]


def join_blocks(blocks: list[Block], size_bytes: int) -> bytes:
    """Concatenate blocks in order and drop the zero padding."""
    data = b"".join(b.bits for b in sorted(blocks, key=lambda b: b.index))
    if size_bytes > len(data):
        raise Truncated(f"{len(blocks)} blocks cannot hold {size_bytes} bytes")
    return data[:size_bytes]


_HEAD = struct.Struct("<4sH")
_BODY = struct.Struct("<IBI")


def to_header(bs: PartialBitstream) -> bytes:
    name = bs.name.encode("utf-8")
    if len(name) > 0xFFFF:
        raise BitstreamError("name too long for container")
    flags = FLAG_CRC if bs.crc_enabled else 0
    return (_HEAD.pack(MAGIC, len(name)) + name
            + _BODY.pack(len(bs.payload), flags, bs.crc_value) + bs.payload)


def from_header(data: bytes) -> PartialBitstream:
    if len(data) < 4 or data[:4] != MAGIC:
        raise NotAContainer("missing RFB1 magic")
    if len(data) < _HEAD.size:
        raise Truncated("container ends inside the header")
    _, name_len = _HEAD.unpack_from(data, 0)
    pos = _HEAD.size
    if len(data) < pos + name_len + _BODY.size:
        raise Truncated("container ends before the payload descriptor")
    name = data[pos:pos + name_len].decode("utf-8")
    pos += name_len
    payload_len, flags, crc = _BODY.unpack_from(data, pos)
    pos += _BODY.size
    if len(data) - pos < payload_len:
        raise Truncated(f"declared payload of {payload_len} bytes, {len(data) - pos} present")
    payload = data[pos:pos + payload_len]
    return PartialBitstream(name, payload, bool(flags & FLAG_CRC), crc)


def to_c_header(bs: PartialBitstream, per_line: int = 12) -> str:
    """Textual C-header rendering of a bitstream (informative only)."""
    ident = "".join(c if c.isalnum() else "_" for c in bs.name)
    lines = [
        f"/* {bs.name}: {bs.size_bytes} bytes, crc {'on' if bs.crc_enabled else 'off'} 0x{bs.crc_value:08x} */",
        f"#define {ident.upper()}_LEN {bs.size_bytes}",
        f"const unsigned char {ident}[{bs.size_bytes}] = {{",
    ]
    for off in range(0, bs.size_bytes, per_line):
        chunk = bs.payload[off:off + per_line]
        lines.append("    " + ", ".join(f"0x{b:02x}" for b in chunk) + ",")
    lines.append("};")
    return "\n".join(lines) + "\n"


def read_container(path) -> PartialBitstream:
    with open(path, "rb") as fh:
        return from_header(fh.read())


def write_container(path, bs: PartialBitstream) -> None:
    with open(path, "wb") as fh:
        fh.write(to_header(bs))
