"""Dotted-key run configuration.

One text file drives every stage: lines of ``key = value``, ``#`` comments,
blank lines ignored. Unknown keys are rejected so typos fail loudly instead
of silently running with defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised for unknown keys or malformed values in a config file."""


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}

# key -> (type, default). Types: int, float, bool, str.
SCHEMA: dict[str, tuple[type, Any]] = {
    "preprocess.mz_min": (float, 101.0),
    "preprocess.mz_max": (float, 1500.0),
    "preprocess.bin_width": (float, 1.0005),
    "preprocess.top_k": (int, 50),
    "preprocess.intensity_transform": (str, "sqrt"),
    "bucket.window_width": (float, 1.0),
    "hd.dimension": (int, 2048),
    "hd.levels": (int, 32),
    "hd.seed": (int, 1),
    "pack.n": (int, 3),
    "pack.mode": (str, "sum"),
    "encode.skip_zero": (bool, True),
    "device.kind": (str, "sbte"),
    "noise.sigma0": (float, 0.12),
    "noise.rho": (float, 0.55),
    "noise.sigma_min": (float, 0.01),
    "noise.table": (str, ""),
    "noise.per_read": (bool, False),
    "noise.wv_cycles": (int, 0),
    "adc.bits": (int, 6),
    "adc.full_scale": (float, 0.0),  # 0 -> auto: 4 * n * sqrt(cols)
    "adc.bypass": (bool, False),
    "dac.bits": (int, 3),
    "array.rows": (int, 128),
    "array.cols": (int, 128),
    "machine.num_arrays": (int, 0),  # 0 -> sized to the workload
    "cluster.threshold": (float, 0.42),
    "search.wv_cycles": (int, 3),
    "search.fdr_q": (float, 0.01),
    "search.precursor_window": (float, 0.0),  # 0 -> open search, full bank
}

# Keys the search stage overrides when the user did not set them explicitly
# (DB search runs at a higher dimension, on the long-retention device, with
# write-verify on the one-time reference programming).
SEARCH_DEFAULTS: dict[str, Any] = {
    "hd.dimension": 8192,
    "device.kind": "tite",
    "noise.wv_cycles": 3,
}


def _coerce(key: str, raw: str) -> Any:
    typ = SCHEMA[key][0]
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(
            f"bad value for {key!r}: {raw!r} (expected {typ.__name__})"
        ) from exc


def _validate(key: str, value: Any) -> None:
    if key == "pack.mode" and value != "sum":
        raise ConfigError(f"pack.mode must be 'sum', got {value!r}")
    if key == "pack.n" and not 1 <= value <= 7:
        raise ConfigError(f"pack.n must be in [1, 7], got {value}")
    if key == "adc.bits" and not 1 <= value <= 6:
        raise ConfigError(f"adc.bits must be in [1, 6], got {value}")
    if key == "dac.bits" and value < 1:
        raise ConfigError(f"dac.bits must be >= 1, got {value}")
    if key == "device.kind" and value not in ("sbte", "tite"):
        raise ConfigError(f"device.kind must be 'sbte' or 'tite', got {value!r}")
    if key == "hd.levels" and value < 2:
        raise ConfigError(f"hd.levels must be >= 2, got {value}")
    if key in ("noise.sigma0", "noise.sigma_min") and value < 0:
        raise ConfigError(f"{key} must be >= 0, got {value}")
    if key == "noise.rho" and not 0.0 < value < 1.0:
        raise ConfigError(f"noise.rho must be in (0, 1), got {value}")
    if key in ("noise.wv_cycles", "search.wv_cycles") and value < 0:
        raise ConfigError(f"{key} must be >= 0, got {value}")
    if key == "cluster.threshold" and not 0.0 <= value <= 1.0:
        raise ConfigError(f"cluster.threshold must be in [0, 1], got {value}")
    if key == "search.fdr_q" and not 0.0 < value < 1.0:
        raise ConfigError(f"search.fdr_q must be in (0, 1), got {value}")


@dataclass
class Config:
    """Validated key/value store with schema defaults.

    ``explicit`` records which keys came from the user (file or CLI), so a
    stage can apply its own defaults only to untouched keys.
    """

    values: dict[str, Any] = field(
        default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()}
    )
    explicit: set[str] = field(default_factory=set)

    def get(self, key: str) -> Any:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key: {key!r}")
        return self.values[key]

    def set(self, key: str, value: Any) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key: {key!r}")
        if isinstance(value, str) and SCHEMA[key][0] is not str:
            value = _coerce(key, value)
        typ = SCHEMA[key][0]
        if typ is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, typ):
            raise ConfigError(
                f"bad value for {key!r}: {value!r} (expected {typ.__name__})"
            )
        _validate(key, value)
        self.values[key] = value
        self.explicit.add(key)

    def copy(self) -> "Config":
        return Config(dict(self.values), set(self.explicit))

    def with_overrides(self, overrides: dict[str, Any]) -> "Config":
        cfg = self.copy()
        for key, value in overrides.items():
            cfg.set(key, value)
        return cfg

    def apply_stage_defaults(self, defaults: dict[str, Any]) -> "Config":
        """Return a copy where each default is applied unless explicitly set."""
        cfg = self.copy()
        for key, value in defaults.items():
            if key not in cfg.explicit:
                cfg.values[key] = value
        return cfg

    def adc_full_scale(self) -> float:
        """ADC full scale; 0 means auto-scale to the spread of a random
        partial sum over one tile width (4 * n * sqrt(cols))."""
        configured = self.get("adc.full_scale")
        if configured > 0:
            return configured
        return 4.0 * self.get("pack.n") * math.sqrt(self.get("array.cols"))

    def dump(self) -> str:
        return "\n".join(f"{k} = {self.values[k]}" for k in sorted(SCHEMA)) + "\n"


def load_config(path: str | Path) -> Config:
    """Parse a config file; unknown keys and bad values raise ConfigError."""
    cfg = Config()
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key: {key!r}")
        cfg.set(key, _coerce(key, value))
    return cfg
