"""Chained ASCON authentication, checkpoint localisation and golden-block repair.

Each 128-bit block is hashed on its own and folded into a running XOR chain::

    H[0] = A(block[0])
    H[i] = A(block[i]) ^ H[i-1]

Storing ``H`` at a few checkpoint indices lets a verifier tell not only that a
bitstream changed but which stretch of blocks changed.  The XOR of two
neighbouring checkpoints equals the XOR of the block digests between them, so
every diverging segment can be reported, not just the first one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ascon import DIGEST_BYTES, block_digest
from .bitstream import Block, PartialBitstream, join_blocks, split_blocks


class IntegrityError(ValueError):
    pass


class BadCheckpointCount(IntegrityError):
    pass


class NoGoldenCopy(KeyError):
    pass


class NothingToRepair(IntegrityError):
    """Raised when repair is asked for on a verdict that found no fault."""


class ManifestError(IntegrityError):
    pass


def _xor(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


def checkpoint_indices(m: int, x: int) -> list[int]:
    """``x`` evenly spaced block indices in ``[0, m)``, the last one always ``m - 1``."""
    if not 1 <= x <= m:
        raise BadCheckpointCount(f"checkpoint count {x} outside [1, {m}]")
    return [-(-(j + 1) * m // x) - 1 for j in range(x)]


def chain_digests(blocks: list[Block]) -> list[bytes]:
    """Every intermediate chain value ``H[0..m-1]``."""
    chain = []
    prev = None
    for blk in blocks:
        d = block_digest(blk.bits)
        prev = d if prev is None else _xor(d, prev)
        chain.append(prev)
    return chain


@dataclass(frozen=True)
class IntegrityRecord:
    final_hash: bytes
    checkpoints: tuple[tuple[int, bytes], ...]
    block_count: int
    payload_length: int | None = None

    def __post_init__(self):
        idx = [i for i, _ in self.checkpoints]
        if not idx or any(b <= a for a, b in zip(idx, idx[1:])):
            raise IntegrityError("checkpoint indices must be strictly increasing")
        if idx[-1] != self.block_count - 1 or self.checkpoints[-1][1] != self.final_hash:
            raise IntegrityError("last checkpoint must be the final hash at block m-1")

    @property
    def x(self) -> int:
        return len(self.checkpoints)

    def segments(self) -> list[tuple[int, int]]:
        """Inclusive block ranges guarded by each checkpoint."""
        out, lo = [], 0
        for i, _ in self.checkpoints:
            out.append((lo, i))
            lo = i + 1
        return out


def chain_hash(blocks: list[Block], x: int = 1, payload_length: int | None = None) -> IntegrityRecord:
    if not blocks:
        raise IntegrityError("no blocks to hash")
    m = len(blocks)
    idx = checkpoint_indices(m, x)
    chain = chain_digests(blocks)
    return IntegrityRecord(chain[-1], tuple((i, chain[i]) for i in idx), m, payload_length)


def record_for(bs: PartialBitstream, x: int | None = None) -> IntegrityRecord:
    """Golden record for ``bs``; ``x`` defaults to one checkpoint per block."""
    blocks = split_blocks(bs)
    return chain_hash(blocks, len(blocks) if x is None else x, bs.size_bytes)


@dataclass(frozen=True)
class FaultVerdict:
    flt_status: bool
    faulty_segments: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if not self.flt_status and self.faulty_segments:
            raise IntegrityError("a clean verdict cannot list faulty segments")

    def faulty_blocks(self) -> list[int]:
        return [i for lo, hi in self.faulty_segments for i in range(lo, hi + 1)]


def authenticate(bs: PartialBitstream, golden: IntegrityRecord) -> FaultVerdict:
    blocks = split_blocks(bs)
    length_differs = golden.payload_length is not None and golden.payload_length != bs.size_bytes
    if len(blocks) != golden.block_count or length_differs:
        return FaultVerdict(True, ((0, golden.block_count - 1),))

    chain = chain_digests(blocks)
    if chain[-1] == golden.final_hash:
        return FaultVerdict(False)

    faulty = []
    prev_seen = prev_gold = bytes(DIGEST_BYTES)
    for (lo, hi), (_, gold) in zip(golden.segments(), golden.checkpoints):
        seen = chain[hi]
        # XOR of the segment's own block digests, independent of earlier segments
        if _xor(seen, prev_seen) != _xor(gold, prev_gold):
            faulty.append((lo, hi))
        prev_seen, prev_gold = seen, gold
    return FaultVerdict(True, tuple(faulty))


@dataclass
class GoldenEntry:
    record: IntegrityRecord
    blocks: list[Block] | None = None


@dataclass
class GoldenStore:
    """Fault-free references keyed by bitstream name; read-only once loaded."""

    entries: dict[str, GoldenEntry] = field(default_factory=dict)

    def add(self, bs: PartialBitstream, x: int | None = None) -> IntegrityRecord:
        blocks = split_blocks(bs)
        rec = chain_hash(blocks, len(blocks) if x is None else x, bs.size_bytes)
        self.entries[bs.name] = GoldenEntry(rec, blocks)
        return rec

    def add_record(self, name: str, record: IntegrityRecord) -> None:
        self.entries[name] = GoldenEntry(record)

    def attach_blocks(self, bs: PartialBitstream) -> None:
        """Attach fault-free blocks to a manifest-only entry after checking them."""
        entry = self.entries.get(bs.name)
        if entry is None:
            raise NoGoldenCopy(bs.name)
        if authenticate(bs, entry.record).flt_status:
            raise IntegrityError(f"{bs.name}: blocks do not match the golden record")
        entry.blocks = split_blocks(bs)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def record(self, name: str) -> IntegrityRecord:
        try:
            return self.entries[name].record
        except KeyError:
            raise NoGoldenCopy(name) from None

    def blocks(self, name: str) -> list[Block]:
        entry = self.entries.get(name)
        if entry is None or entry.blocks is None:
            raise NoGoldenCopy(name)
        return entry.blocks


def repair(bs: PartialBitstream, verdict: FaultVerdict, store: GoldenStore) -> PartialBitstream:
    """Swap every block inside the verdict's faulty segments for its golden copy."""
    if not verdict.flt_status:
        raise NothingToRepair(f"{bs.name}: verdict reports no fault")
    golden_blocks = store.blocks(bs.name)
    record = store.record(bs.name)
    size = record.payload_length
    if size is None:
        size = bs.size_bytes

    current = split_blocks(bs)
    if len(current) != len(golden_blocks) or size != bs.size_bytes:
        fixed = list(golden_blocks)
    else:
        fixed = list(current)
        for i in verdict.faulty_blocks():
            fixed[i] = golden_blocks[i]
    return bs.with_payload(join_blocks(fixed, size))


# Manifest: one line per bitstream, whitespace separated
#   name m x payload_length hex(checkpoint_1) ... hex(checkpoint_x)

def format_manifest_line(name: str, record: IntegrityRecord) -> str:
    length = "-" if record.payload_length is None else str(record.payload_length)
    digests = " ".join(d.hex() for _, d in record.checkpoints)
    return f"{name} {record.block_count} {record.x} {length} {digests}"


def parse_manifest_line(line: str) -> tuple[str, IntegrityRecord]:
    parts = line.split()
    if len(parts) < 5:
        raise ManifestError(f"too few fields: {line!r}")
    name = parts[0]
    try:
        m, x = int(parts[1]), int(parts[2])
        length = None if parts[3] == "-" else int(parts[3])
        digests = [bytes.fromhex(h) for h in parts[4:]]
    except ValueError as exc:
        raise ManifestError(f"bad field in {line!r}: {exc}") from None
    if len(digests) != x:
        raise ManifestError(f"{name}: x={x} but {len(digests)} digests")
    if any(len(d) != DIGEST_BYTES for d in digests):
        raise ManifestError(f"{name}: digests must be {DIGEST_BYTES} bytes")
    try:
        idx = checkpoint_indices(m, x)
    except BadCheckpointCount as exc:
        raise ManifestError(str(exc)) from None
    return name, IntegrityRecord(digests[-1], tuple(zip(idx, digests)), m, length)


def dump_manifest(store: GoldenStore) -> str:
    return "".join(format_manifest_line(n, e.record) + "\n" for n, e in store.entries.items())


def load_manifest(text: str) -> GoldenStore:
    store = GoldenStore()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            name, rec = parse_manifest_line(line)
        except ManifestError as exc:
            raise ManifestError(f"line {lineno}: {exc}") from None
        store.add_record(name, rec)
    return store
