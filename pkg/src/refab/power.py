"""Power-waster, PDN voltage-drop, fault-channel and voltage-sensor models.

None of the physical constants here are measurements.  They are fitted so the
calibration sweep lands in the neighbourhood of the hardware success rates
(see ``DEFAULT_FAULT_MODEL``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

#: LUTs on an XC7Z020; one RO occupies one LUT, so 16,000 ROs is ~30 %.
DEVICE_LUTS = 53_200
MAX_INSTANCES = 50_000
SELF_CLOCKED_MULTIPLIER = 1.08


class PowerModelError(ValueError):
    pass


class NotAnOscillator(PowerModelError):
    pass


class BadDelay(PowerModelError):
    pass


class BadDuration(PowerModelError):
    pass


class WindowMismatch(PowerModelError):
    pass


class WasterKind(enum.Enum):
    COMBO_RO = "combo"
    SELF_CLOCKED_RO = "self-clocked"


def ro_frequency(n: int, t_d: float) -> float:
    """Free-running frequency ``1 / (2 n t_d)`` of an ``n``-inverter ring."""
    if n < 1 or n % 2 == 0:
        raise NotAnOscillator(f"a ring of {n} inverters does not oscillate")
    if not t_d > 0:
        raise BadDelay(f"propagation delay must be positive, got {t_d}")
    return 1.0 / (2 * n * t_d)


@dataclass(frozen=True)
class WasterConfig:
    kind: WasterKind = WasterKind.COMBO_RO
    n_inverters: int = 3
    t_d: float = 1e-9
    f_toggle: float = 1e3
    ro_act: float = 0.5
    n_instances: int = 16_000
    ro_mask: int = 0xFF
    ro_ena: bool = True
    severity: float = SELF_CLOCKED_MULTIPLIER

    def __post_init__(self):
        if self.n_inverters < 1 or self.n_inverters % 2 == 0:
            raise NotAnOscillator(f"n_inverters={self.n_inverters} must be odd")
        if not self.t_d > 0:
            raise BadDelay("t_d must be positive")
        if not 0 < self.ro_act <= 1:
            raise PowerModelError(f"ro_act={self.ro_act} must lie in (0, 1]")
        if not 0 <= self.n_instances <= MAX_INSTANCES:
            raise PowerModelError(f"n_instances={self.n_instances} outside [0, {MAX_INSTANCES}]")
        if not 0 <= self.ro_mask <= 0xFF:
            raise PowerModelError("ro_mask is an 8-bit bank mask")
        if not self.f_toggle > 0:
            raise PowerModelError("f_toggle must be positive")

    @property
    def active_banks(self) -> int:
        return bin(self.ro_mask).count("1")

    @property
    def active_instances(self) -> float:
        return self.n_instances * self.active_banks / 8

    @property
    def base_utilization(self) -> float:
        return self.n_instances / DEVICE_LUTS

    @property
    def lut_utilization(self) -> float:
        return self.base_utilization * self.active_banks / 8

    @property
    def oscillation_frequency(self) -> float:
        return ro_frequency(self.n_inverters, self.t_d)

    @property
    def current_multiplier(self) -> float:
        return self.severity if self.kind is WasterKind.SELF_CLOCKED_RO else 1.0


@dataclass(frozen=True)
class PdnParams:
    nominal_voltage: float = 1.0
    R: float = 0.075
    L: float = 5e-10
    i_per_instance: float = 1e-4
    dt: float = 1e-8

    def __post_init__(self):
        for name in ("nominal_voltage", "R", "L", "i_per_instance", "dt"):
            if not getattr(self, name) > 0:
                raise PowerModelError(f"pdn.{name} must be strictly positive")


def v_drop(current, di_dt, pdn: PdnParams):
    """Resistive plus inductive drop, ``I R + L dI/dt``.  Works on arrays too."""
    return current * pdn.R + pdn.L * di_dt


@dataclass(frozen=True)
class VoltageTrace:
    start_time: float
    dt: float
    samples: np.ndarray

    @property
    def end_time(self) -> float:
        return self.start_time + len(self.samples) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.dt * np.arange(len(self.samples))

    def index_at(self, t):
        return np.floor((np.asarray(t) - self.start_time) / self.dt + 1e-9).astype(np.int64)

    def voltage_at(self, t):
        return self.samples[self.index_at(t)]

    def to_csv(self) -> str:
        rows = ["time,voltage"]
        rows += [f"{t:.9e},{v:.9f}" for t, v in zip(self.times, self.samples)]
        return "\n".join(rows) + "\n"


def nominal_trace(pdn: PdnParams, duration: float, start_time: float = 0.0) -> VoltageTrace:
    n = max(1, math.ceil(duration / pdn.dt - 1e-9))
    return VoltageTrace(start_time, pdn.dt, np.full(n, pdn.nominal_voltage))


def gate(cfg: WasterConfig, times: np.ndarray, activation: float = 0.0, phase: float = 0.0) -> np.ndarray:
    """Square-wave enable: on for the first ``ro_act`` of every toggle period.

    ``activation`` is when ``ro_ena`` went high; ``phase`` (fraction of a
    period) shifts the wave relative to it.
    """
    frac = np.mod((times - activation) * cfg.f_toggle + phase, 1.0)
    return (frac < cfg.ro_act - 1e-12).astype(float)


def simulate_trace(cfg: WasterConfig, pdn: PdnParams, duration: float,
                   start_time: float = 0.0, phase: float = 0.0) -> VoltageTrace:
    """Supply voltage while the waster toggles, sampled every ``pdn.dt``.

    The waster is taken to be enabled at ``start_time``.  ``dI/dt`` is a
    forward difference; the drop is floored at zero so inductive overshoot on
    switch-off never pushes the supply above nominal.
    """
    if not duration > 0:
        raise BadDuration(f"duration must be positive, got {duration}")
    n = max(1, math.ceil(duration / pdn.dt - 1e-9))
    if not cfg.ro_ena or cfg.active_banks == 0 or cfg.n_instances == 0:
        return VoltageTrace(start_time, pdn.dt, np.full(n, pdn.nominal_voltage))

    # one extra sample so the last point has a forward difference
    times = start_time + pdn.dt * np.arange(n + 1)
    amps = cfg.active_instances * pdn.i_per_instance * cfg.current_multiplier
    current = amps * gate(cfg, times, start_time, phase)
    di_dt = np.diff(current) / pdn.dt
    drop = np.maximum(v_drop(current[:-1], di_dt, pdn), 0.0)
    return VoltageTrace(start_time, pdn.dt, pdn.nominal_voltage - drop)


@dataclass(frozen=True)
class FaultModel:
    """Per-bit flip probability ``p_max * logistic((V_th - V) / s)``.

    The channel is cut to exactly zero once the supply is ``5 s`` above
    threshold.
    """

    v_th: float = 0.67
    p_max: float = 0.022
    s: float = 0.066
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.p_max <= 1:
            raise PowerModelError("p_max must lie in [0, 1]")
        if not self.s > 0:
            raise PowerModelError("steepness s must be positive")

    def flip_probability(self, voltage):
        v = np.asarray(voltage, dtype=float)
        p = self.p_max / (1.0 + np.exp(-(self.v_th - v) / self.s))
        return np.where(v >= self.v_th + 5 * self.s, 0.0, p)

    def with_seed(self, seed: int) -> FaultModel:
        return replace(self, rng_seed=seed)


DEFAULT_FAULT_MODEL = FaultModel()


@dataclass(frozen=True)
class TransferWindow:
    """Maps payload byte ``b`` to time ``start + (b // bytes_per_step) * step``.

    All eight bits of a byte share its transfer time.  The default rate is one
    32-bit configuration word per 10 ns.
    """

    start: float
    n_bytes: int
    bytes_per_step: int = 4
    step: float = 1e-8

    @property
    def n_steps(self) -> int:
        return -(-self.n_bytes // self.bytes_per_step)

    @property
    def duration(self) -> float:
        return self.n_steps * self.step

    @property
    def end(self) -> float:
        return self.start + self.duration

    def byte_times(self) -> np.ndarray:
        return self.start + (np.arange(self.n_bytes) // self.bytes_per_step) * self.step


def _unpack(payload: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(payload, dtype=np.uint8))


def inject_faults(payload: bytes, window: TransferWindow, trace: VoltageTrace, fm: FaultModel,
                  rng: np.random.Generator | None = None) -> tuple[bytes, list[int]]:
    """Pass ``payload`` through the fault channel while it is being transferred.

    Returns the corrupted payload and the flipped bit positions (MSB-first bit
    numbering within each byte).  Without an explicit ``rng`` the generator is
    seeded from ``fm.rng_seed``.
    """
    if window.n_bytes != len(payload):
        raise WindowMismatch(f"window covers {window.n_bytes} bytes, payload has {len(payload)}")
    if len(payload) == 0:
        return b"", []
    times = window.byte_times()
    tol = 1e-9 * trace.dt
    if times[0] < trace.start_time - tol or times[-1] >= trace.end_time - tol:
        raise WindowMismatch(
            f"transfer [{times[0]:.3e}, {times[-1]:.3e}] s outside trace "
            f"[{trace.start_time:.3e}, {trace.end_time:.3e}) s")
    if rng is None:
        rng = np.random.default_rng(fm.rng_seed)

    p_byte = fm.flip_probability(trace.voltage_at(times))
    draws = rng.random((len(payload), 8))
    flips = draws < p_byte[:, None]
    positions = np.flatnonzero(flips.ravel())
    if positions.size == 0:
        return bytes(payload), []
    bits = _unpack(payload)
    bits[positions] ^= 1
    return np.packbits(bits).tobytes(), positions.tolist()


@dataclass(frozen=True)
class SensorConfig:
    """Slow on-chip voltage sensor.

    A reading covers one whole sampling period and is low only if the supply
    stayed under ``alarm_threshold`` for the entire period; it becomes
    available at the end of that period.
    """

    sampling_period: float = 1e-3
    alarm_threshold: float = 0.95
    k_consecutive: int = 3

    def __post_init__(self):
        if not self.sampling_period > 0:
            raise PowerModelError("sampling_period must be positive")
        if self.k_consecutive < 1:
            raise PowerModelError("k_consecutive must be >= 1")


def sensor_detect(trace: VoltageTrace, sc: SensorConfig) -> float | None:
    """Time of the first alarm, or ``None`` if the sensor never fires."""
    per = sc.sampling_period / trace.dt
    n_periods = int(math.floor(len(trace.samples) / per + 1e-9))
    run = 0
    for j in range(n_periods):
        lo = int(round(j * per))
        hi = max(lo + 1, int(round((j + 1) * per)))
        if trace.samples[lo:hi].max() < sc.alarm_threshold:
            run += 1
            if run >= sc.k_consecutive:
                return trace.start_time + (j + 1) * sc.sampling_period
        else:
            run = 0
    return None


def expected_flip_count(window: TransferWindow, trace: VoltageTrace, fm: FaultModel) -> float:
    """Mean number of flipped bits over a transfer."""
    return float(fm.flip_probability(trace.voltage_at(window.byte_times())).sum() * 8)
