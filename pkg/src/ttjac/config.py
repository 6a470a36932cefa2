"""Run configuration: defaults, TOML config file, command-line overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .jacobian import FeatureMapSpec, GeneratorSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    d: int = 4
    grid_size: int = 32
    tail_mass: float = 1e-4
    sample_count: int = 10_000
    anova_order: int = 1
    als_rank: str = "0"  # "0": ANOVA only, an integer, or "auto"
    als_sweeps: int = 10
    als_ridge: float | None = None
    holdout_fraction: float = 0.1
    generator: str = "mlp"
    threads: int = 1

    def __post_init__(self):
        if self.anova_order != 1:
            raise ConfigError("only ANOVA order 1 is supported")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.grid_size < 2 or self.grid_size > 0xFFFF:
            raise ConfigError("grid_size must lie in [2, 65535]")
        if not 0.0 < self.tail_mass < 0.5:
            raise ConfigError("tail_mass must lie in (0, 0.5)")
        if self.sample_count < 1:
            raise ConfigError("sample_count must be >= 1")
        if self.als_sweeps < 1:
            raise ConfigError("als_sweeps must be >= 1")
        if self.als_ridge is not None and self.als_ridge < 0:
            raise ConfigError("als_ridge must be >= 0")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must lie in [0, 1)")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        rank = str(self.als_rank)
        if rank != "auto" and not (rank.isdigit() and int(rank) >= 0):
            raise ConfigError(f"als_rank must be a non-negative integer or 'auto', got {rank!r}")
        object.__setattr__(self, "als_rank", rank)

    def fit_hash(self) -> str:
        keys = ("seed", "grid_size", "tail_mass", "anova_order", "als_rank",
                "als_sweeps", "als_ridge", "holdout_fraction")
        blob = json.dumps({k: getattr(self, k) for k in keys}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value):
    if value is None:
        return None
    kind = _FIELDS[name].type
    try:
        if kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if kind in ("float", "float | None"):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the TOML file at ``path``, then non-None ``overrides``."""
    values = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for key, val in raw.items():
            key = key.replace("-", "_")
            if key not in _FIELDS:
                raise ConfigError(f"{path}: unknown config key {key!r}")
            values[key] = _coerce(key, val)
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = _coerce(key, val)
    return RunConfig(**values)


def load_generator(spec: str, d: int = 2, seed: int = 0) -> tuple[GeneratorSpec, FeatureMapSpec]:
    """Generator and feature map from a JSON file, or from a preset name.

    Presets take ``d`` and ``seed`` from the run config; a JSON file may set
    them itself and may hold a ``feature`` entry.
    """
    path = Path(spec)
    if path.suffix == ".json" or path.exists():
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read generator spec {spec}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{spec}: invalid JSON: {exc}") from exc
    else:
        raw = {"preset": spec}
    if not isinstance(raw, dict):
        raise ConfigError(f"{spec}: generator spec must be a JSON object")
    feature = raw.pop("feature", None)
    if "preset" in raw:
        raw.setdefault("d", d)
        raw.setdefault("seed", seed)
    gen = GeneratorSpec.from_dict(raw)
    return gen, FeatureMapSpec.from_dict(feature)
