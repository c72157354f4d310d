from pathlib import Path

import numpy as np
import pytest

from refab.bitstream import PartialBitstream

FIXTURES = Path(__file__).parent / "fixtures"

# (criterion, passed, detail) lines collected by test_acceptance
ACCEPTANCE = []


def random_bitstream(rng, n_bytes, name="bs", crc=True):
    return PartialBitstream(name, rng.bytes(n_bytes), crc)


def flip_bit(payload: bytes, bit: int) -> bytes:
    buf = bytearray(payload)
    buf[bit // 8] ^= 0x80 >> (bit % 8)
    return bytes(buf)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {crit:2d}: {detail}")
