"""Command-line driver.

Exit codes: 0 success, 2 input error, 3 simulated security event, 64 usage.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import integrity
from .bitstream import BitstreamError, PartialBitstream, from_header, to_c_header, to_header
from .calibration import (AttackContext, CalibrationError, CalibrationResult, NoAttempts,
                          mask_for_utilization, run_sweep, summary_block)
from .config import ConfigError, apply_overrides, load_settings
from .integrity import IntegrityError, NoGoldenCopy
from .manager import ReconfigManager, Status, VerificationMode
from .power import WasterKind, sensor_detect, simulate_trace
from .scenario import ScenarioError, load_scenario, run_scenario

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_EVENT = 3
EXIT_USAGE = 64


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _on_off(value: str) -> bool:
    v = value.lower()
    if v in ("on", "yes", "true", "1"):
        return True
    if v in ("off", "no", "false", "0"):
        return False
    raise argparse.ArgumentTypeError("expected on or off")


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _read_container(path) -> PartialBitstream:
    return from_header(_read_bytes(path))


def _write(path, data, binary=False) -> None:
    if path in (None, "-"):
        sys.stdout.write(data)
        return
    mode = "wb" if binary else "w"
    with open(path, mode) as fh:
        fh.write(data)


def _load_store(manifest: str) -> integrity.GoldenStore:
    try:
        return integrity.load_manifest(Path(manifest).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {manifest}: {exc.strerror}") from None


def _waster_from(args, settings):
    overrides = dict(kv.split("=", 1) for kv in args.waster or [])
    return apply_overrides(replace(settings.waster, ro_ena=True), overrides, "waster")


# -- verbs ------------------------------------------------------------------

def cmd_convert(args) -> int:
    raw = _read_bytes(args.input)
    name = args.name or Path(args.input).stem
    bs = PartialBitstream(name, raw, crc_enabled=args.crc)
    _write(args.out, to_header(bs), binary=True)
    if args.c_header:
        _write(args.c_header, to_c_header(bs))
    print(f"name={bs.name} size={bs.size_bytes} m={bs.block_count} "
          f"crc={'on' if bs.crc_enabled else 'off'} crc_value=0x{bs.crc_value:08x}")
    return EXIT_OK


def cmd_run(args) -> int:
    settings = load_settings(args.config)
    sc = load_scenario(args.scenario)
    if args.mode:
        sc.mode = VerificationMode(args.mode)
    result = run_scenario(sc, settings, attack_seed=args.attack_seed)
    log_text = result.manager.status_log() + "".join(n + "\n" for n in result.notes)
    _write(args.log, log_text)
    if args.errors_dir:
        out = Path(args.errors_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in result.error_csv.items():
            (out / f"{name}_errors.csv").write_text(text)
    return result.exit_code


def cmd_calibrate(args) -> int:
    settings = load_settings(args.config)
    plan = settings.sweep
    changes = {}
    if args.nt is not None:
        if args.nt < 1:
            raise NoAttempts("N_t must be at least 1")
        changes["n_t"] = args.nt
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.kind:
        changes["kind"] = WasterKind(args.kind)
    if args.utilization is not None:
        changes["ro_mask"] = mask_for_utilization(args.utilization / 100, plan.n_instances)
    plan = replace(plan, **changes)
    ctx = AttackContext(pdn=settings.pdn, fault_model=settings.fault_model)
    result = run_sweep(plan, ctx, workers=args.workers)
    _write(args.out, result.to_csv())
    print(f"F_s={float(result.f_s):.2f}% (N_c={result.n_c}, N_t={result.n_t})")
    return EXIT_OK


def _parse_calibration_csv(text: str) -> CalibrationResult:
    rows = list(csv.reader(text.splitlines()))
    if not rows or rows[0] != ["f_toggle", "attempts", "successes"]:
        raise InputError("not a calibration CSV")
    freqs, att, suc = [], [], []
    for row in rows[1:]:
        if not row:
            break
        freqs.append(float(row[0]))
        att.append(int(row[1]))
        suc.append(int(row[2]))
    if not freqs:
        raise InputError("calibration CSV has no rows")
    return CalibrationResult(min(freqs), max(freqs), freqs, att, suc)


def cmd_report(args) -> int:
    result = _parse_calibration_csv(_read_bytes(args.input).decode())
    ranges = None
    if args.ranges:
        edges = [float(x) for x in args.ranges.split(",")]
        ranges = list(zip(edges, edges[1:]))
    sys.stdout.write(summary_block(result, ranges))
    return EXIT_OK


def cmd_hash(args) -> int:
    bs = _read_container(args.input)
    x = args.checkpoints or bs.block_count
    rec = integrity.record_for(bs, x)
    line = integrity.format_manifest_line(bs.name, rec) + "\n"
    _write(args.manifest, line)
    return EXIT_OK


def cmd_verify(args) -> int:
    bs = _read_container(args.input)
    store = _load_store(args.manifest)
    verdict = integrity.authenticate(bs, store.record(bs.name))
    segs = " ".join(f"{lo}..{hi}" for lo, hi in verdict.faulty_segments)
    print(f"{bs.name} flt_status={str(verdict.flt_status).lower()}" + (f" faulty={segs}" if segs else ""))
    return EXIT_EVENT if verdict.flt_status else EXIT_OK


def cmd_repair(args) -> int:
    bs = _read_container(args.input)
    store = _load_store(args.manifest)
    golden = _read_container(args.golden)
    if golden.name != bs.name:
        raise InputError(f"golden copy is {golden.name!r}, expected {bs.name!r}")
    store.attach_blocks(golden)
    verdict = integrity.authenticate(bs, store.record(bs.name))
    if not verdict.flt_status:
        print(f"{bs.name} is clean, nothing to repair")
        fixed = bs
    else:
        fixed = integrity.repair(bs, verdict, store)
        print(f"{bs.name} repaired blocks {verdict.faulty_blocks()}")
    _write(args.out, to_header(fixed), binary=True)
    return EXIT_OK


def _one_shot(args, configure: bool) -> int:
    settings = load_settings(args.config)
    bs = _read_container(args.input)
    store = integrity.GoldenStore()
    if args.manifest:
        store = _load_store(args.manifest)
    attack = _waster_from(args, settings) if args.attack else None
    mgr = ReconfigManager(mode=VerificationMode(args.mode), golden=store, pdn=settings.pdn,
                          fault_model=settings.fault_model, seed=args.seed)
    status, record = mgr.preload(bs, attack)
    if configure and status is Status.OK:
        status = mgr.configure(bs.name, args.prr)
    sys.stdout.write(mgr.status_log())
    if record is not None and record.attacked:
        print(f"flipped_bits={len(record.flipped_bits)}")
    return EXIT_OK if status is Status.OK else EXIT_EVENT


def cmd_preload(args) -> int:
    return _one_shot(args, configure=False)


def cmd_configure(args) -> int:
    return _one_shot(args, configure=True)


def cmd_attack(args) -> int:
    settings = load_settings(args.config)
    cfg = _waster_from(args, settings)
    trace = simulate_trace(cfg, settings.pdn, args.duration)
    if args.out:
        _write(args.out, trace.to_csv())
    alarm = sensor_detect(trace, settings.sensor)
    print(f"v_min={trace.samples.min():.6f} utilization={100 * cfg.lut_utilization:.2f}% "
          f"sensor={'none' if alarm is None else f'alarm@{alarm:.6e}s'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="refab", description="Reconfiguration fault-attack simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, metavar="VERB")

    c = sub.add_parser("convert", help="wrap a raw .bin into an RFB1 container")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--crc", type=_on_off, default=True, metavar="on|off")
    c.add_argument("--name")
    c.add_argument("--c-header", dest="c_header")
    c.set_defaults(func=cmd_convert)

    r = sub.add_parser("run", help="execute a scenario file")
    r.add_argument("--scenario", required=True)
    r.add_argument("--mode", choices=[m.value for m in VerificationMode])
    r.add_argument("--attack-seed", "--seed", dest="attack_seed", type=int)
    r.add_argument("--config")
    r.add_argument("--log", default="-")
    r.add_argument("--errors-dir", dest="errors_dir")
    r.set_defaults(func=cmd_run)

    k = sub.add_parser("calibrate", help="toggle-frequency sweep against AES")
    k.add_argument("--config")
    k.add_argument("--out", required=True)
    k.add_argument("--nt", type=int)
    k.add_argument("--seed", type=int)
    k.add_argument("--kind", choices=[w.value for w in WasterKind])
    k.add_argument("--utilization", type=float, help="target LUT utilization in percent")
    k.add_argument("--workers", type=int, default=1)
    k.set_defaults(func=cmd_calibrate)

    rp = sub.add_parser("report", help="summarise a calibration CSV")
    rp.add_argument("--in", dest="input", required=True)
    rp.add_argument("--ranges", help="comma-separated frequency edges")
    rp.set_defaults(func=cmd_report)

    h = sub.add_parser("hash", help="emit a golden manifest line")
    h.add_argument("--in", dest="input", required=True)
    h.add_argument("--checkpoints", type=int)
    h.add_argument("--manifest", default="-")
    h.set_defaults(func=cmd_hash)

    v = sub.add_parser("verify", help="authenticate a container against a manifest")
    v.add_argument("--in", dest="input", required=True)
    v.add_argument("--manifest", required=True)
    v.set_defaults(func=cmd_verify)

    rr = sub.add_parser("repair", help="replace faulty blocks from a golden copy")
    rr.add_argument("--in", dest="input", required=True)
    rr.add_argument("--manifest", required=True)
    rr.add_argument("--golden", required=True)
    rr.add_argument("--out", required=True)
    rr.set_defaults(func=cmd_repair)

    for verb, func in (("preload", cmd_preload), ("configure", cmd_configure)):
        s = sub.add_parser(verb, help=f"one-shot {verb} through a fresh manager")
        s.add_argument("--in", dest="input", required=True)
        s.add_argument("--mode", default="crc", choices=[m.value for m in VerificationMode])
        s.add_argument("--manifest")
        s.add_argument("--attack", action="store_true")
        s.add_argument("--waster", action="append", metavar="KEY=VALUE")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--config")
        if verb == "configure":
            s.add_argument("--prr", type=int, default=0)
        s.set_defaults(func=func)

    a = sub.add_parser("attack", help="simulate a waster trace and the sensor response")
    a.add_argument("--duration", type=float, default=1e-4)
    a.add_argument("--waster", action="append", metavar="KEY=VALUE")
    a.add_argument("--out")
    a.add_argument("--seed", type=int, default=0, help="accepted for uniformity; traces are deterministic")
    a.add_argument("--config")
    a.set_defaults(func=cmd_attack)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, BitstreamError, ConfigError, ScenarioError, CalibrationError,
            IntegrityError, NoGoldenCopy, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"refab: error: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
