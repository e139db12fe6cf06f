"""Experiment configuration with dotted JSON keys."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError

# dotted key -> dataclass attribute
KEYS = {
    "data.path": "data_path",
    "data.lookback": "lookback",
    "data.horizon": "horizon",
    "data.split": "split",
    "model.k": "k",
    "model.d": "d",
    "model.d_attn": "d_attn",
    "model.dconv": "dconv",
    "model.layers": "layers",
    "model.encoder": "encoder",
    "model.scales": "scales",
    "model.conv_width": "conv_width",
    "model.top_k": "top_k",
    "model.constrain_alpha": "constrain_alpha",
    "train.lr": "lr",
    "train.epochs": "epochs",
    "train.batch": "batch",
    "train.seed": "seed",
    "train.max_steps": "max_steps",
    "norm.mode": "norm_mode",
}
ENCODERS = ("dft", "conv", "multiscale")
NORM_MODES = ("window", "trainsplit")


@dataclass
class ForecastConfig:
    data_path: str = ""
    lookback: int = 96
    horizon: int = 96
    split: list = field(default_factory=lambda: [0.7, 0.1, 0.2])
    k: int = 4
    d: int = 24
    d_attn: int | None = None
    dconv: int = 4
    layers: int = 1
    encoder: str = "multiscale"
    scales: list = field(default_factory=lambda: [1, 4, 24])
    conv_width: int = 24
    top_k: int = 3
    constrain_alpha: bool = True
    lr: float = 1e-3
    epochs: int = 10
    batch: int = 32
    seed: int = 0
    max_steps: int = 0
    norm_mode: str = "window"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.lookback < 1 or self.horizon < 1:
            raise ConfigError(f"lookback and horizon must be >= 1 (got {self.lookback}, {self.horizon})")
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError(f"data.split must be three fractions summing to 1, got {self.split}")
        for name in ("k", "d", "dconv", "layers", "batch", "conv_width", "top_k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_attn is not None and self.d_attn < 1:
            raise ConfigError(f"model.d_attn must be >= 1, got {self.d_attn}")
        if self.encoder not in ENCODERS:
            raise ConfigError(f"model.encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.encoder == "multiscale" and (not self.scales or self.d % len(self.scales)):
            raise ConfigError(f"model.d={self.d} must be divisible by the number of scales {self.scales}")
        if self.norm_mode not in NORM_MODES:
            raise ConfigError(f"norm.mode must be one of {NORM_MODES}, got {self.norm_mode!r}")
        if self.lr < 0 or self.epochs < 0 or self.max_steps < 0:
            raise ConfigError("train.lr, train.epochs and train.max_steps must be non-negative")

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "ForecastConfig":
        flat = _flatten(raw)
        unknown = sorted(set(flat) - set(KEYS))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**{KEYS[k]: v for k, v in flat.items()})

    @classmethod
    def from_json(cls, path) -> "ForecastConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict[str, Any]:
        attrs = asdict(self)
        return {dotted: attrs[attr] for dotted, attr in KEYS.items()}

    def replace(self, **changes) -> "ForecastConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return ForecastConfig(**values)


def _flatten(raw: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    # accepts {"data.path": ...} as well as {"data": {"path": ...}}
    out = {}
    for key, value in raw.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out
