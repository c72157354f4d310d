"""INI-style physical configuration: ``[pdn]``, ``[fault_model]``, ``[sensor]``, ``[waster]``, ``[sweep]``.

Keys are addressed as ``section.key`` in messages, e.g. ``pdn.R``.  Missing
keys fall back to the library defaults.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace

from .calibration import SweepPlan
from .power import FaultModel, PdnParams, SensorConfig, WasterConfig, WasterKind

ENV_VAR = "REFAB_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass
class Settings:
    pdn: PdnParams = field(default_factory=PdnParams)
    fault_model: FaultModel = field(default_factory=FaultModel)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    waster: WasterConfig = field(default_factory=WasterConfig)
    sweep: SweepPlan = field(default_factory=SweepPlan)


def _convert(cls, key: str, raw: str):
    f = {f.name: f for f in fields(cls)}.get(key)
    if f is None:
        raise ConfigError(f"unknown key {key!r} for {cls.__name__}")
    default = getattr(cls(), key)
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("1", "on", "true", "yes"):
            return True
        if raw.lower() in ("0", "off", "false", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, WasterKind):
        return WasterKind(raw)
    if key == "ro_mask":
        return int(raw, 16)
    if isinstance(default, int):
        return int(float(raw))
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, bytes):
        return bytes.fromhex(raw)
    return raw


def apply_overrides(obj, pairs: dict[str, str], section: str):
    """Return ``obj`` with the string ``pairs`` parsed onto its fields."""
    cls = type(obj)
    kwargs = {}
    for key, raw in pairs.items():
        try:
            kwargs[key] = _convert(cls, key, raw)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{section}.{key}: {exc}") from None
    try:
        return replace(obj, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def load_settings(path: str | os.PathLike | None = None) -> Settings:
    """Read settings from ``path``, else ``$REFAB_CONFIG``, else defaults."""
    path = path or os.environ.get(ENV_VAR)
    settings = Settings()
    if not path:
        return settings
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep pdn.R / pdn.L capitalised
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    for section in cp.sections():
        if not hasattr(settings, section):
            raise ConfigError(f"unknown section [{section}]")
        current = getattr(settings, section)
        setattr(settings, section, apply_overrides(current, dict(cp.items(section)), section))
    return settings
