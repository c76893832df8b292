"""Upsampling configuration and plain-text config file parsing."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import DataError
from .nn.layers import NetArchitecture

NORMAL_BACKENDS = ("pca", "learned")
FIELD_BACKENDS = ("solver", "learned")


@dataclass
class UpsampleConfig:
    """Hyperparameters and backend selections for the upsampling pipeline.

    The chart/network widths mirror the reference design at desk scale
    (c and c_f are intentionally small so CPU training stays fast).
    """

    ratio: float = 4.0  # requested upsampling ratio r (> 1)
    iterations: int = 10  # refinement passes D
    k1: int = 6  # field smoothness graph size
    k2: int = 48  # chart neighborhood cap
    beta: float = 1.0 / 3.0  # chart radius fraction of the patch diagonal
    d: int = 7  # chart grid dimension (odd)
    c: int = 8  # voxel channels
    c_f: int = 16  # point feature width
    lambda0: float = 0.1  # orthogonality weight
    lambda1: float = 200.0  # chamfer weight
    lambda_u: float = 0.4  # uniformity weight
    normal_backend: str = "pca"
    field_backend: str = "solver"
    seed: int = 0
    # plumbing
    pca_k: int = 16  # PCA normal neighborhood
    field_sweeps: int = 10  # solver sweeps per pass
    offset_clamp: float = 2.0  # max offset norm, in chart radii (inference)
    oversample: int = 2  # per-chart samples = ceil(ratio) + oversample
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.ratio > 1.0:
            raise DataError(f"ratio must be > 1, got {self.ratio}")
        if self.iterations < 1:
            raise DataError(f"iterations must be >= 1, got {self.iterations}")
        if self.d < 1 or self.d % 2 == 0:
            raise DataError(f"chart dimension d must be odd and positive, got {self.d}")
        for name in ("k1", "k2", "pca_k", "field_sweeps", "oversample", "c", "c_f"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("beta", "lambda0", "lambda1", "lambda_u", "offset_clamp"):
            if getattr(self, name) < 0:
                raise DataError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.normal_backend not in NORMAL_BACKENDS:
            raise DataError(f"normal_backend must be one of {NORMAL_BACKENDS}")
        if self.field_backend not in FIELD_BACKENDS:
            raise DataError(f"field_backend must be one of {FIELD_BACKENDS}")
        if self.threads < 1:
            raise DataError(f"threads must be >= 1, got {self.threads}")

    def arch(self) -> NetArchitecture:
        return NetArchitecture(d=self.d, c=self.c, c_f=self.c_f)

    def echo(self) -> dict:
        return dataclasses.asdict(self)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse `key = value` lines; '#' comments and blank lines are ignored."""
    values = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{source}:{ln}: expected 'key = value', got '{raw.strip()}'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise DataError(f"{source}:{ln}: empty key or value")
        if key in values:
            raise DataError(f"{source}:{ln}: duplicate key '{key}'")
        values[key] = value
    return values


def load_config_file(path) -> dict:
    with open(path, "r") as fh:
        return parse_config_text(fh.read(), source=str(path))


def _coerce(value: str, target_type):
    if target_type is bool:
        low = value.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: '{value}'")
    return target_type(value)


def apply_config_values(values: dict, *objects):
    """Assign parsed strings onto dataclass instances by field name.

    A key may name a field shared by several targets (e.g. seed) and is
    applied to each of them; unknown keys raise DataError. Values are coerced
    to the declared field type.
    """
    field_owners: dict = {}
    for obj in objects:
        for f in dataclasses.fields(obj):
            field_owners.setdefault(f.name, []).append((obj, f))
    for key, raw in values.items():
        if key not in field_owners:
            raise DataError(f"unknown config key '{key}'")
        for obj, f in field_owners[key]:
            base = f.type if isinstance(f.type, type) else type(getattr(obj, f.name))
            try:
                setattr(obj, f.name, _coerce(raw, base))
            except (TypeError, ValueError) as e:
                raise DataError(f"config key '{key}': {e}") from None
    for obj in objects:
        if hasattr(obj, "validate"):
            obj.validate()
