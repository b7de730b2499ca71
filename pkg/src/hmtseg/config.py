"""Run configuration; defaults follow the published parameter settings."""
from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

from .core import InputError

CONFIG_ENV = "HMTSEG_CONFIG"


@dataclass(frozen=True)
class Config:
    water_level: float = 0.01
    min_size: int = 20
    iterations: int = 10
    n_trees: int = 255
    sample_fraction: float = 0.7
    max_features: int = 0  # 0 selects floor(sqrt(n_features))
    balanced_weights: bool = True
    label_metric: str = "vi"
    detail_levels: int = 0  # 0 uses every level all training items share
    seed: int = 0
    threshold_start: float = 0.01
    threshold_stop: float = 0.99
    threshold_step: float = 0.01
    noise_variance: float = 0.0
    noise_seed: int = 0
    early_stopping: bool = False
    workers: int = 1

    def __post_init__(self):
        if not 0.0 <= self.water_level < 1.0:
            raise InputError("water_level must lie in [0, 1)")
        if self.min_size < 0 or self.iterations < 0 or self.n_trees < 1:
            raise InputError("min_size, iterations must be >= 0 and n_trees >= 1")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise InputError("sample_fraction must lie in (0, 1]")
        if self.label_metric not in ("vi", "ri"):
            raise InputError("label_metric must be 'vi' or 'ri'")
        if self.noise_variance < 0:
            raise InputError("noise_variance must be >= 0")

    @property
    def thresholds(self) -> tuple[float, ...]:
        n = int(round((self.threshold_stop - self.threshold_start) / self.threshold_step)) + 1
        return tuple(round(self.threshold_start + k * self.threshold_step, 10) for k in range(n))

    def with_overrides(self, **kw) -> "Config":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


def _coerce(kind, raw: str):
    if kind in (bool, "bool"):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InputError(f"not a boolean: {raw!r}")
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw.strip()


def parse_config(text: str, base: Config | None = None) -> Config:
    """Parse ``key = value`` lines (``#`` starts a comment) over ``base``."""
    types = {f.name: f.type for f in fields(Config)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(types[key], raw)
    return replace(base or Config(), **values)


def load_config(path: str | None = None) -> Config:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return Config()
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
