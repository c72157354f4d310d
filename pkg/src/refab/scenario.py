"""Line-oriented scenario files driving the reconfiguration manager.

Example::

    # settings
    mode crc
    seed 7
    checkpoints 16
    # one line per bitstream, in preload order
    bitstream blinkall.rfb prr=0 attack=on victim=blinkall n_instances=50000
    bitstream mac.rfb prr=1 victim=mac crc=off
    bitstream fft.rfb prr=2 victim=fft encrypted=yes

Bitstream paths are relative to the scenario file.  Keys on a ``bitstream``
line other than ``prr``, ``attack``, ``victim``, ``crc`` and ``encrypted`` are
waster overrides.  All entries are preloaded first; configuration only
starts once the whole queue has been handled.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .aes import aes_encrypt
from .bitstream import BitstreamError, PartialBitstream, read_container
from .config import ConfigError, Settings, apply_overrides
from .integrity import GoldenStore
from .manager import ReconfigManager, Status, VerificationMode
from .victims import (BLINK_KINDS, VictimKind, blink_frames, make_victim, uniform_stimuli,
                      reports_to_csv, run_fft, run_mac)

_TRUE = {"on", "yes", "true", "1"}
_FALSE = {"off", "no", "false", "0"}


class ScenarioError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass
class Entry:
    path: Path
    prr: int
    attack: bool = False
    victim: VictimKind | None = None
    crc: bool | None = None
    encrypted: bool = False
    waster: dict[str, str] = field(default_factory=dict)
    lineno: int = 0


@dataclass
class Scenario:
    entries: list[Entry]
    mode: VerificationMode = VerificationMode.CRC_ONLY
    seed: int = 0
    prrs: int = 4
    checkpoints: int | None = None
    repair: bool = True
    stimuli: int = 10


def _flag(lineno: int, key: str, value: str) -> bool:
    v = value.lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ScenarioError(lineno, f"{key} must be on/off, got {value!r}")


def parse_scenario(text: str, base: Path | str = ".") -> Scenario:
    base = Path(base)
    sc = Scenario([])
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            if head == "bitstream":
                sc.entries.append(_parse_entry(lineno, rest, base))
            elif head == "mode" and len(rest) == 1:
                sc.mode = VerificationMode(rest[0])
            elif head in ("seed", "prrs", "checkpoints", "stimuli") and len(rest) == 1:
                setattr(sc, head, int(rest[0]))
            elif head == "repair" and len(rest) == 1:
                sc.repair = _flag(lineno, "repair", rest[0])
            else:
                raise ScenarioError(lineno, f"cannot parse {line!r}")
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(lineno, str(exc)) from None
    if not sc.entries:
        raise ScenarioError(0, "scenario lists no bitstreams")
    for e in sc.entries:
        if not 0 <= e.prr < sc.prrs:
            raise ScenarioError(e.lineno, f"prr={e.prr} outside [0, {sc.prrs})")
    return sc


def _parse_entry(lineno: int, tokens: list[str], base: Path) -> Entry:
    if not tokens:
        raise ScenarioError(lineno, "bitstream needs a file")
    entry = Entry(base / tokens[0], prr=-1, lineno=lineno)
    for tok in tokens[1:]:
        if "=" not in tok:
            raise ScenarioError(lineno, f"expected key=value, got {tok!r}")
        key, value = tok.split("=", 1)
        if key == "prr":
            entry.prr = int(value)
        elif key == "attack":
            entry.attack = _flag(lineno, key, value)
        elif key == "victim":
            entry.victim = VictimKind(value)
        elif key == "crc":
            entry.crc = _flag(lineno, key, value)
        elif key == "encrypted":
            entry.encrypted = _flag(lineno, key, value)
        else:
            entry.waster[key] = value
    if entry.prr < 0:
        raise ScenarioError(lineno, "bitstream line needs prr=<id>")
    return entry


@dataclass
class RunResult:
    manager: ReconfigManager
    security_event: bool
    error_csv: dict[str, str]
    notes: list[str]

    @property
    def exit_code(self) -> int:
        return 3 if self.security_event else 0


def run_scenario(sc: Scenario, settings: Settings | None = None,
                 attack_seed: int | None = None) -> RunResult:
    settings = settings or Settings()
    seed = sc.seed if attack_seed is None else attack_seed

    loaded: list[tuple[Entry, PartialBitstream]] = []
    for e in sc.entries:
        try:
            bs = read_container(e.path)
        except (OSError, BitstreamError) as exc:
            raise ScenarioError(e.lineno, f"{e.path}: {exc}") from None
        if e.crc is not None:
            bs = PartialBitstream(bs.name, bs.payload, e.crc, bs.crc_value)
        loaded.append((e, bs))

    golden = GoldenStore()
    for e, bs in loaded:
        x = None if sc.checkpoints is None else min(sc.checkpoints, bs.block_count)
        golden.add(bs, x)

    mgr = ReconfigManager(n_prrs=sc.prrs, mode=sc.mode, golden=golden, pdn=settings.pdn,
                          fault_model=settings.fault_model, seed=seed)
    event = False
    for e, bs in loaded:
        attack = None
        if e.attack:
            try:
                attack = apply_overrides(replace(settings.waster, ro_ena=True), e.waster, "waster")
            except ConfigError as exc:
                raise ScenarioError(e.lineno, str(exc)) from None
        status, _ = mgr.preload(bs, attack, encrypted=e.encrypted)
        event |= status is not Status.OK

    # attack over: every waster is off from here on
    for e, bs in loaded:
        if mgr.halted:
            mgr.configure(bs.name, e.prr)  # logged as Halted
            continue
        if bs.name in mgr.bitstore:
            mgr.configure(bs.name, e.prr)
        elif sc.repair and mgr.uses_hash and bs.name in mgr.rejected:
            mgr.repair_and_configure(bs.name, e.prr)

    rng = np.random.default_rng(seed)
    error_csv: dict[str, str] = {}
    notes: list[str] = []
    for e, bs in loaded:
        payload = mgr.prr_payload(e.prr)
        if e.victim is None or payload is None or mgr.prrs[e.prr].configured.name != bs.name:
            continue
        victim = make_victim(e.victim, payload, bs.payload)
        if e.victim is VictimKind.MAC:
            reports = run_mac(victim, uniform_stimuli(rng, sc.stimuli, 1, 10))
            error_csv[bs.name] = reports_to_csv(reports)
        elif e.victim is VictimKind.FFT:
            reports = run_fft(victim, uniform_stimuli(rng, sc.stimuli, 0, 10))
            error_csv[bs.name] = reports_to_csv(reports)
        elif e.victim in BLINK_KINDS:
            frames = victim.blink_frames(16)
            bad = sum(a != b for a, b in zip(frames, blink_frames(e.victim, 16)))
            notes.append(f"victim {bs.name} glitched_frames={bad}/16")
        elif e.victim is VictimKind.AES:
            key, pt = rng.bytes(16), rng.bytes(16)
            faulty = victim.aes_encrypt(key, pt) != aes_encrypt(key, pt)
            notes.append(f"victim {bs.name} faulty_ciphertext={'yes' if faulty else 'no'}")
    return RunResult(mgr, event, error_csv, notes)


def load_scenario(path: str | os.PathLike) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(0, f"cannot read {path}: {exc}") from None
    return parse_scenario(text, path.parent)

