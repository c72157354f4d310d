"""Toggle-frequency sweep against an AES victim and the F_s / F_t statistics.

One attempt = one AES encryption (11 clock cycles at the victim clock) while
the waster toggles at one of the plan's frequencies with a random phase.
Each round state is pushed through the fault channel at that round's supply
voltage; an attempt succeeds when the ciphertext differs from the golden one.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .aes import ROUNDS
from .power import (DEFAULT_FAULT_MODEL, FaultModel, PdnParams, TransferWindow, WasterConfig,
                    WasterKind, inject_faults, simulate_trace)
from .victims import golden_aes


class CalibrationError(ValueError):
    pass


class NoAttempts(CalibrationError):
    pass


class NoSuccesses(CalibrationError):
    pass


def success_rate(n_c: int, n_t: int) -> Fraction:
    """``F_s = N_c / N_t * 100`` as an exact fraction."""
    if n_t <= 0:
        raise NoAttempts("no attempts were made")
    if not 0 <= n_c <= n_t:
        raise CalibrationError(f"successes {n_c} outside [0, {n_t}]")
    return Fraction(100 * n_c, n_t)


def mask_for_utilization(target: float, n_instances: int = 16_000) -> int:
    """Bank mask giving ``target`` LUT utilization.  Half the banks is ``0xCC``."""
    base = WasterConfig(n_instances=n_instances).base_utilization
    banks = max(0, min(8, round(8 * target / base)))
    if banks == 4:
        return 0xCC
    return (1 << banks) - 1


@dataclass(frozen=True)
class SweepPlan:
    f_low: float = 1.0
    f_high: float = 1e6
    n_points: int = 61
    n_t: int = 10_000
    kind: WasterKind = WasterKind.COMBO_RO
    ro_mask: int = 0xFF
    n_instances: int = 16_000
    ro_act: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.f_low < self.f_high:
            raise CalibrationError("need 0 < f_low < f_high")
        if self.n_points < 1:
            raise CalibrationError("n_points must be >= 1")
        if self.n_t < 1:
            raise NoAttempts("N_t must be >= 1")

    def frequencies(self) -> np.ndarray:
        if self.n_points == 1:
            return np.array([self.f_low])
        return np.logspace(math.log10(self.f_low), math.log10(self.f_high), self.n_points)

    def waster(self, f_toggle: float) -> WasterConfig:
        return WasterConfig(kind=self.kind, f_toggle=float(f_toggle), ro_act=self.ro_act,
                            n_instances=self.n_instances, ro_mask=self.ro_mask)

    @property
    def lut_utilization(self) -> float:
        return self.waster(self.f_low).lut_utilization


@dataclass
class CalibrationResult:
    f_low: float
    f_high: float
    frequencies: list[float]
    attempts: list[int]
    successes: list[int]

    @property
    def n_t(self) -> int:
        return sum(self.attempts)

    @property
    def n_c(self) -> int:
        return sum(self.successes)

    @property
    def f_s(self) -> Fraction:
        return success_rate(self.n_c, self.n_t)

    def to_csv(self, ranges=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["f_toggle", "attempts", "successes"])
        for f, a, s in zip(self.frequencies, self.attempts, self.successes):
            w.writerow([f"{f:.6g}", a, s])
        buf.write("\n" + summary_block(self, ranges))
        return buf.getvalue()


def range_share(result: CalibrationResult, f_l: float, f_u: float) -> Fraction:
    """``F_t`` for ``[f_l, f_u)``; the sweep's top frequency counts as inside ``f_u == f_high``."""
    if not f_l < f_u:
        raise CalibrationError("need f_l < f_u")
    if result.n_c == 0:
        raise NoSuccesses("no successful attempts to apportion")
    inside = 0
    for f, s in zip(result.frequencies, result.successes):
        if f_l <= f < f_u or (f == f_u and math.isclose(f_u, result.f_high)):
            inside += s
    return Fraction(100 * inside, result.n_c)


def decade_ranges(f_low: float, f_high: float) -> list[tuple[float, float]]:
    lo = math.floor(math.log10(f_low) + 1e-12)
    hi = math.ceil(math.log10(f_high) - 1e-12)
    edges = [10.0 ** e for e in range(lo, hi + 1)]
    edges[0], edges[-1] = f_low, f_high
    return list(zip(edges, edges[1:]))


def summary_block(result: CalibrationResult, ranges=None) -> str:
    lines = [f"N_t,{result.n_t}", f"N_c,{result.n_c}", f"F_s,{float(result.f_s):.2f}"]
    if result.n_c:
        for f_l, f_u in ranges or decade_ranges(result.f_low, result.f_high):
            lines.append(f"F_t[{f_l:g}-{f_u:g}),{float(range_share(result, f_l, f_u)):.2f}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AttackContext:
    """Physical setting shared by every attempt of a sweep."""

    pdn: PdnParams = field(default_factory=PdnParams)
    fault_model: FaultModel = DEFAULT_FAULT_MODEL
    victim_clock: float = 1e8
    key: bytes = bytes(range(16))


def attempt(plan: SweepPlan, ctx: AttackContext, index: int, f_toggle: float, encrypt=None) -> bool:
    """Run attempt ``index``; owns generator ``(seed, index)`` so order never matters."""
    rng = np.random.default_rng([plan.seed, index])
    encrypt = encrypt or golden_aes(ctx.key)
    plaintext = rng.bytes(16)
    phase = rng.random()

    cycle = 1.0 / ctx.victim_clock
    pdn = replace(ctx.pdn, dt=cycle)
    n_states = ROUNDS + 1
    trace = simulate_trace(plan.waster(f_toggle), pdn, n_states * cycle, phase=phase)
    window = TransferWindow(0.0, 16 * n_states, bytes_per_step=16, step=cycle)
    noise, flips = inject_faults(bytes(16 * n_states), window, trace, ctx.fault_model, rng)
    masks = {r: noise[16 * r:16 * r + 16] for r in range(n_states) if any(noise[16 * r:16 * r + 16])}
    return encrypt(plaintext, masks) != encrypt(plaintext)


def _run_chunk(args) -> list[tuple[int, bool]]:
    plan, ctx, indices, freqs = args
    encrypt = golden_aes(ctx.key)
    return [(i, attempt(plan, ctx, i, freqs[i % len(freqs)], encrypt)) for i in indices]


def run_sweep(plan: SweepPlan, ctx: AttackContext | None = None, workers: int = 1) -> CalibrationResult:
    """Round-robin ``plan.n_t`` attempts over the log-spaced frequency grid."""
    ctx = ctx or AttackContext()
    freqs = [float(f) for f in plan.frequencies()]
    attempts = [0] * len(freqs)
    successes = [0] * len(freqs)

    indices = list(range(plan.n_t))
    if workers > 1:
        chunks = [(plan, ctx, indices[w::workers], freqs) for w in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            outcomes = [o for part in pool.map(_run_chunk, chunks) for o in part]
    else:
        outcomes = _run_chunk((plan, ctx, indices, freqs))

    for i, ok in outcomes:
        k = i % len(freqs)
        attempts[k] += 1
        successes[k] += ok
    return CalibrationResult(plan.f_low, plan.f_high, freqs, attempts, successes)

