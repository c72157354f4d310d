"""Persistent reconfiguration fault attacks on FPGA partial bitstreams, and an
ASCON chained-hash countermeasure, simulated at desk scale."""

from .bitstream import Block, PartialBitstream, compute_crc, from_header, split_blocks, to_header
from .integrity import FaultVerdict, GoldenStore, IntegrityRecord, authenticate, chain_hash, repair
from .manager import ReconfigManager, Status, VerificationMode, decryption_cycles
from .power import FaultModel, PdnParams, SensorConfig, WasterConfig, WasterKind

__version__ = "0.1.0"

__all__ = [
    "Block", "PartialBitstream", "compute_crc", "from_header", "split_blocks", "to_header",
    "FaultVerdict", "GoldenStore", "IntegrityRecord", "authenticate", "chain_hash", "repair",
    "ReconfigManager", "Status", "VerificationMode", "decryption_cycles",
    "FaultModel", "PdnParams", "SensorConfig", "WasterConfig", "WasterKind",
]
