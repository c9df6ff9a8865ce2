"""Engine configuration: defaults, flat key-value config files, env overrides."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import get_type_hints

ENV_PREFIX = "GROWTHCAST_"

DEFAULT_QUANTILES = (
    0.01, 0.025, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5,
    0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.975, 0.99,
)


@dataclass(frozen=True)
class OutlierConfig:
    hampel_window: int = 15
    hampel_nsigma: float = 3.0
    zscore_threshold: float = 3.5
    iqr_window: int = 7
    iqr_k: float = 3.0
    esd_alpha: float = 0.05
    esd_max_frac: float = 0.10
    studentized_threshold: float = 4.0
    vote_threshold: int = 3
    replace_weeks: int = 3
    replace_min_points: int = 3
    fallback_window: int = 15
    min_length: int = 14


@dataclass(frozen=True)
class EngineConfig:
    horizon: int = 28
    samples: int = 1000
    seed: int = 20201014
    eta_grid: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    omega_grid: tuple[float, ...] = (1, 2, 3, 5, 7, 10, 14, 21, 28)
    phi_grid: tuple[float, ...] = (0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.4, 1.6)
    nu_grid: tuple[int, ...] = (7, 14, 21, 28, 35)
    theta_lower_quantiles: tuple[float, ...] = (0.05, 0.10, 0.25)
    theta_upper_quantiles: tuple[float, ...] = (0.75, 0.90, 0.95)
    attack_rate_lower: float = 0.4
    attack_rate_nominal: float = 0.55
    attack_rate_upper: float = 0.7
    attack_rate_retries: int = 100
    quantile_levels: tuple[float, ...] = DEFAULT_QUANTILES
    dispersion_window: int = 42
    dispersion_mean_window: int = 7
    dispersion_mean_floor: float = 0.5
    damping_floor: float = 1e-6
    distance_floor: float = 1e-12
    workers: int = 1
    outliers: OutlierConfig = field(default_factory=OutlierConfig)

    def __post_init__(self):
        if not 0 < self.attack_rate_lower < self.attack_rate_nominal < self.attack_rate_upper < 1:
            raise ValueError("attack rates must satisfy 0 < lower < nominal < upper < 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        q = self.quantile_levels
        if not q or any(not 0 < x < 1 for x in q) or any(b <= a for a, b in zip(q, q[1:])):
            raise ValueError("quantile levels must be strictly increasing in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def replace(self, **changes) -> "EngineConfig":
        return dataclasses.replace(self, **changes)


def _convert(text: str, typ) -> object:
    text = text.strip()
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    if typ is bool:
        return text.lower() in ("1", "true", "yes", "on")
    if typ is str:
        return text
    origin = getattr(typ, "__origin__", None)
    if origin is tuple:
        inner = typ.__args__[0]
        return tuple(_convert(part, inner) for part in text.split(",") if part.strip())
    raise TypeError(f"unsupported config type {typ!r}")


def _field_types() -> dict[str, object]:
    types = {}
    for name, typ in get_type_hints(EngineConfig).items():
        if name == "outliers":
            continue
        types[name] = typ
    for name, typ in get_type_hints(OutlierConfig).items():
        types[f"outliers.{name}"] = typ
    return types


def apply_overrides(config: EngineConfig, overrides: dict[str, str]) -> EngineConfig:
    """Apply string-valued ``key -> value`` overrides, parsing by field type.

    Outlier settings use dotted keys such as ``outliers.hampel_window``.
    """
    types = _field_types()
    top, nested = {}, {}
    for key, raw in overrides.items():
        key = key.strip()
        if key not in types:
            raise KeyError(f"unknown config key {key!r}")
        value = _convert(raw, types[key])
        if key.startswith("outliers."):
            nested[key.split(".", 1)[1]] = value
        else:
            top[key] = value
    if nested:
        top["outliers"] = dataclasses.replace(config.outliers, **nested)
    return dataclasses.replace(config, **top) if top else config


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def env_overrides(environ=None) -> dict[str, str]:
    """Config keys from ``GROWTHCAST_<KEY>`` variables (dots become ``__``)."""
    environ = os.environ if environ is None else environ
    types = _field_types()
    out = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower().replace("__", ".")
        if key in types:
            out[key] = value
    return out


def load_config(path=None, flags: dict[str, str] | None = None, environ=None) -> EngineConfig:
    """Defaults, then config file, then environment, then CLI flags."""
    config = EngineConfig()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            config = apply_overrides(config, parse_config_text(fh.read()))
    config = apply_overrides(config, env_overrides(environ))
    if flags:
        config = apply_overrides(config, flags)
    return config


def dump_config(config: EngineConfig) -> str:
    lines = []
    for name in _field_types():
        if name.startswith("outliers."):
            value = getattr(config.outliers, name.split(".", 1)[1])
        else:
            value = getattr(config, name)
        if isinstance(value, tuple):
            value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"
