"""Reconfiguration-manager state machine (preload queue, PRRs, status codes).

Bitstreams are first preloaded into the bitstore.  The transfer is the only
moment the fault channel is consulted, so an attacker's waster only has to be
active for that exposure window.  Whatever arrives is then checked according
to the verification mode:

* ``CRC_ONLY``: a CRC mismatch returns code 2 and halts the manager; every
  later preload or configure is refused until :meth:`reset`.
* ``ASCON_ONLY`` / ``BOTH``: a hash mismatch rejects that bitstream alone.
* ``NONE``: everything is accepted, corrupted or not.

Configuring copies the bitstore payload into a PRR.  The PRR keeps those bytes
until it is configured again, so faults persist after the attack stops.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import integrity
from .bitstream import PartialBitstream
from .integrity import FaultVerdict, GoldenStore, NoGoldenCopy
from .power import (DEFAULT_FAULT_MODEL, FaultModel, PdnParams, TransferWindow, WasterConfig,
                    inject_faults, simulate_trace)

log = logging.getLogger(__name__)

# Cycle counts for decrypting the three encrypted reference bitstreams
DECRYPTION_TABLE = {65532: 533820, 65540: 534006, 131068: 1066358}
_LINE = ((65532, 533820), (131068, 1066358))


def decryption_cycles(size_bytes: int) -> int:
    if size_bytes <= 0:
        raise ValueError("size must be positive")
    if size_bytes in DECRYPTION_TABLE:
        return DECRYPTION_TABLE[size_bytes]
    (x0, y0), (x1, y1) = _LINE
    return round(y0 + (size_bytes - x0) * (y1 - y0) / (x1 - x0))


class Status(enum.IntEnum):
    OK = 0
    CRC_ERROR = 2
    HASH_MISMATCH = 3
    HALTED = 4
    BUSY = 5


class VerificationMode(enum.Enum):
    CRC_ONLY = "crc"
    ASCON_ONLY = "ascon"
    BOTH = "both"
    NONE = "none"


class ManagerError(RuntimeError):
    pass


class NotPreloaded(ManagerError, KeyError):
    pass


class PrrDisabled(ManagerError):
    pass


class UnknownPrr(ManagerError, KeyError):
    pass


@dataclass
class Prr:
    id: int
    configured: PartialBitstream | None = None
    disabled: bool = False
    history: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class TransferRecord:
    name: str
    start: float
    end: float
    attacked: bool
    flipped_bits: tuple[int, ...] = ()
    verdict: FaultVerdict | None = None

    @property
    def corrupted(self) -> bool:
        return bool(self.flipped_bits)


@dataclass
class LogLine:
    time: float
    command: str
    name: str
    status: Status

    def __str__(self) -> str:
        line = f"{self.time:.9f} {self.command} {self.name} {int(self.status)}"
        if self.status is not Status.OK:
            line += f" Error while loading {self.name}. corq_return: {int(self.status)}"
        return line


class ReconfigManager:
    """Single-owner manager; every mutation goes through one of its commands."""

    def __init__(self, n_prrs: int = 4, mode: VerificationMode = VerificationMode.CRC_ONLY,
                 golden: GoldenStore | None = None, pdn: PdnParams | None = None,
                 fault_model: FaultModel = DEFAULT_FAULT_MODEL, seed: int = 0,
                 bytes_per_step: int = 4, clock_hz: float = 1e8):
        self.mode = VerificationMode(mode)
        self.golden = golden if golden is not None else GoldenStore()
        self.pdn = pdn or PdnParams()
        self.fault_model = fault_model
        self.seed = seed
        self.bytes_per_step = bytes_per_step
        self.clock_hz = clock_hz
        self.prrs = [Prr(i) for i in range(n_prrs)]
        self.log: list[LogLine] = []
        self.transfers: list[TransferRecord] = []
        self.clock = 0.0
        self._rng = np.random.default_rng(seed)
        self.reset()

    def reset(self) -> None:
        """Clear the halt flag and the bitstore.  PRR contents are left alone."""
        self.bitstore: dict[str, PartialBitstream] = {}
        self.rejected: dict[str, tuple[PartialBitstream, FaultVerdict | None]] = {}
        self.halted = False

    def _emit(self, command: str, name: str, status: Status) -> Status:
        entry = LogLine(self.clock, command, name, status)
        self.log.append(entry)
        (log.info if status is Status.OK else log.warning)("%s", entry)
        return status

    def _prr(self, prr_id: int) -> Prr:
        if not 0 <= prr_id < len(self.prrs):
            raise UnknownPrr(prr_id)
        return self.prrs[prr_id]

    @property
    def uses_hash(self) -> bool:
        return self.mode in (VerificationMode.ASCON_ONLY, VerificationMode.BOTH)

    @property
    def uses_crc(self) -> bool:
        return self.mode in (VerificationMode.CRC_ONLY, VerificationMode.BOTH)

    # -- commands ---------------------------------------------------------

    def preload(self, bs: PartialBitstream, attack: WasterConfig | None = None,
                encrypted: bool = False) -> tuple[Status, TransferRecord | None]:
        if self.halted:
            return self._emit("preload", bs.name, Status.HALTED), None

        if encrypted:
            self.clock += decryption_cycles(bs.size_bytes) / self.clock_hz

        window = TransferWindow(self.clock, bs.size_bytes, self.bytes_per_step, self.pdn.dt)
        received = bs.payload
        flips: list[int] = []
        attacked = attack is not None and attack.ro_ena
        if attacked:
            trace = simulate_trace(attack, self.pdn, window.duration, start_time=window.start)
            received, flips = inject_faults(bs.payload, window, trace, self.fault_model, self._rng)
        self.clock = window.end
        arrived = bs.with_payload(received)

        status, verdict = self._verify(arrived)
        record = TransferRecord(bs.name, window.start, window.end, attacked, tuple(flips), verdict)
        self.transfers.append(record)

        if status is Status.OK:
            self.bitstore[bs.name] = arrived
            self.rejected.pop(bs.name, None)
        else:
            self.bitstore.pop(bs.name, None)
            self.rejected[bs.name] = (arrived, verdict)
            if status is Status.CRC_ERROR:
                self.halted = True
        return self._emit("preload", bs.name, status), record

    def _verify(self, arrived: PartialBitstream) -> tuple[Status, FaultVerdict | None]:
        verdict = None
        if self.uses_hash:
            if arrived.name not in self.golden:
                # fail closed: nothing to authenticate against
                return Status.HASH_MISMATCH, None
            verdict = integrity.authenticate(arrived, self.golden.record(arrived.name))
            if verdict.flt_status:
                return Status.HASH_MISMATCH, verdict
        if self.uses_crc and arrived.crc_enabled and not arrived.crc_ok():
            return Status.CRC_ERROR, verdict
        return Status.OK, verdict

    def configure(self, name: str, prr_id: int) -> Status:
        if self.halted:
            return self._emit("configure", name, Status.HALTED)
        prr = self._prr(prr_id)
        if name not in self.bitstore:
            raise NotPreloaded(name)
        if prr.disabled:
            raise PrrDisabled(f"PRR {prr_id} is disabled")
        prr.configured = self.bitstore[name]
        prr.history.append(name)
        return self._emit("configure", name, Status.OK)

    def disable(self, prr_id: int) -> None:
        self._prr(prr_id).disabled = True

    def enable(self, prr_id: int) -> None:
        self._prr(prr_id).disabled = False

    def repair_and_configure(self, name: str, prr_id: int, golden: GoldenStore | None = None) -> Status:
        """Disable the PRR, swap faulty blocks for golden ones, re-enable, configure."""
        store = golden if golden is not None else self.golden
        if self.halted:
            return self._emit("repair", name, Status.HALTED)
        if name in self.bitstore and name not in self.rejected:
            return self.configure(name, prr_id)
        if name not in self.rejected:
            raise NotPreloaded(name)
        if name not in store:
            raise NoGoldenCopy(name)

        arrived, verdict = self.rejected[name]
        if verdict is None:
            verdict = integrity.authenticate(arrived, store.record(name))
        self.disable(prr_id)
        try:
            fixed = integrity.repair(arrived, verdict, store) if verdict.flt_status else arrived
            if integrity.authenticate(fixed, store.record(name)).flt_status:
                raise ManagerError(f"{name}: repaired bitstream still fails authentication")
        finally:
            self.enable(prr_id)
        self.bitstore[name] = fixed
        del self.rejected[name]
        self._emit("repair", name, Status.OK)
        return self.configure(name, prr_id)

    # -- read-only views -----------------------------------------------------

    def prr_payload(self, prr_id: int) -> bytes | None:
        prr = self._prr(prr_id)
        return None if prr.configured is None else prr.configured.payload

    def configured_names(self) -> list[str]:
        return [p.configured.name for p in self.prrs if p.configured is not None]

    def status_log(self) -> str:
        return "".join(f"{line}\n" for line in self.log)


def transfer_time(size_bytes: int, bytes_per_step: int = 4, step: float = 1e-8) -> float:
    """Exposure window for loading ``size_bytes`` at the manager's transfer rate."""
    return math.ceil(size_bytes / bytes_per_step) * step
