"""Run configuration: network hyperparameters plus the synthetic dataset sizes."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

FUSIONS = ("attention", "avg", "cat", "global", "local")
GLOBAL_INPUTS = ("projected", "raw")
SAMPLERS = ("fps", "random")


@dataclass(frozen=True)
class RunConfig:
    k: int = 32
    m: int = 32
    local_dims: tuple[int, ...] = (32, 64, 128)
    global_dims: tuple[int, ...] = (32, 64, 128)
    classifier_dims: tuple[int, ...] = (64, 32)
    n_classes: int = 5
    fusion: str = "attention"
    global_input: str = "projected"
    sampler: str = "fps"
    bn: bool = True
    lr: float = 0.001
    epochs: int = 20
    batch: int = 32
    seed: int = 0
    n_points: int = 256
    train_per_class: int = 80
    test_per_class: int = 20
    jitter: float = 0.01
    train_dtype: str = "float64"

    def __post_init__(self):
        for name in ("k", "m", "n_classes", "epochs", "batch", "n_points",
                     "train_per_class", "test_per_class"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")
        if self.fusion not in FUSIONS:
            raise ValueError(f"fusion must be one of {FUSIONS}")
        if self.global_input not in GLOBAL_INPUTS:
            raise ValueError(f"global_input must be one of {GLOBAL_INPUTS}")
        if self.train_dtype not in ("float32", "float64"):
            raise ValueError("train_dtype must be float32 or float64")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        for name in ("local_dims", "global_dims", "classifier_dims"):
            dims = tuple(int(d) for d in getattr(self, name))
            if not dims or min(dims) < 1:
                raise ValueError(f"{name} must be a non-empty tuple of positive widths")
            object.__setattr__(self, name, dims)
        if self.uses_local and self.uses_global and self.local_dims[-1] != self.global_dims[-1]:
            raise ValueError("fused branches must end at the same width")

    @property
    def uses_local(self) -> bool:
        return self.fusion != "global"

    @property
    def uses_global(self) -> bool:
        return self.fusion != "local"

    @property
    def feature_width(self) -> int:
        return self.local_dims[-1] if self.uses_local else self.global_dims[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("local_dims", "global_dims", "classifier_dims"):
            d[name] = list(d[name])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        known = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            default = known[key].default
            if isinstance(default, tuple):
                if isinstance(value, str):
                    value = [v for v in value.replace(",", " ").split() if v]
                value = tuple(int(v) for v in value)
            elif isinstance(default, bool):
                if isinstance(value, str):
                    value = value.strip().lower() in ("1", "true", "yes", "on")
                value = bool(value)
            elif isinstance(default, int):
                value = int(value)
            elif isinstance(default, float):
                value = float(value)
            kwargs[key] = value
        return cls(**kwargs)

    def updated(self, **changes) -> RunConfig:
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


# Widths and epochs used by the harness; one training run takes a minute or
# two on one CPU core.
DESK_CONFIG = RunConfig(
    k=8,
    local_dims=(16, 32, 64),
    global_dims=(16, 32, 64),
    classifier_dims=(64, 32),
    lr=0.05,
    epochs=8,
    batch=16,
    train_dtype="float32",
)


def load_config(path: str | Path, base: RunConfig = DESK_CONFIG) -> RunConfig:
    """Read a JSON object or `key = value` lines on top of `base`."""
    text = Path(path).read_text()
    stripped = text.strip()
    if stripped.startswith("{"):
        data = json.loads(stripped)
    else:
        data = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            data[key.strip()] = value.strip()
    merged = base.to_dict()
    merged.update(data)
    return RunConfig.from_dict(merged)
