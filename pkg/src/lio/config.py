"""Tunables and the flat ``key = value`` file format shared by configs and manifests."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


def parse_kv(text: str, source: str = "<string>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def read_kv(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    return parse_kv(text, str(path))


def parse_floats(value: str, n: int, key: str) -> np.ndarray:
    try:
        vals = np.array([float(v) for v in value.replace(",", " ").split()])
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from e
    if vals.shape[0] != n:
        raise ConfigError(f"{key}: expected {n} numbers, got {vals.shape[0]}")
    return vals


def parse_bool(value: str, key: str = "") -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: not a boolean: {value!r}")


@dataclass
class Config:
    voxel_size: float = 1.0
    association_threshold: float = 0.5
    max_jerk: float = 3.0
    beta0: float = 200.0
    min_range: float = 1.0
    max_range: float = 100.0
    max_points_per_voxel: int = 20
    map_radius: float = 100.0
    double_downsample: bool = True
    adaptive_regularization: bool = True
    average_imu: bool = True
    run_initialization: bool = True
    propagate_window_attitude: bool = True
    convergence_eps: float = 1e-4
    max_iterations: int = 500

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("voxel_size", "association_threshold", "min_range", "max_range",
                     "map_radius", "beta0", "convergence_eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_jerk < 0:
            raise ConfigError("max_jerk must be non-negative")
        if self.association_threshold > self.voxel_size:
            raise ConfigError("association_threshold must not exceed voxel_size")
        if self.min_range >= self.max_range:
            raise ConfigError("min_range must be below max_range")
        if self.max_points_per_voxel < 1 or self.max_iterations < 1:
            raise ConfigError("max_points_per_voxel and max_iterations must be >= 1")

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "Config":
        kw = {}
        known = {f.name: f for f in fields(cls)}
        for key, value in d.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            default = known[key].default
            try:
                if isinstance(default, bool):
                    kw[key] = parse_bool(value, key)
                elif isinstance(default, int):
                    kw[key] = int(value)
                else:
                    kw[key] = float(value)
            except ValueError as e:
                raise ConfigError(f"{key}: {e}") from e
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "Config":
        return cls.from_dict(read_kv(path))
