"""Run configuration: nested dataclasses loaded from YAML or JSON.

Keys may be nested (``gndd: {enabled: true}``) or dotted (``gndd.enabled:
true``); both forms can be mixed. Unknown keys are rejected.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import List, Optional

import yaml

from ..data import SynthConfig
from ..errors import ConfigError, ValidationError


@dataclass
class GnddConfig:
    enabled: bool = True
    lam: float = 1.0
    seed: int = 0


@dataclass
class DfcConfig:
    enabled: bool = True


@dataclass
class GamConfig:
    raw_gates: bool = False
    r: int = 4
    kernel: int = 7


@dataclass
class FdfConfig:
    enabled: bool = True
    bins: int = 32
    mi_weight: float = 1.0
    mi_channels: int = 128
    gam: GamConfig = field(default_factory=GamConfig)


@dataclass
class OptimConfig:
    method: str = "adamw"
    lr: float = 1e-3
    weight_decay: float = 0.01
    iterations: int = 600
    batch_size: int = 4


@dataclass
class AblationConfig:
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2])


@dataclass
class ModelConfig:
    channels: List[int] = field(default_factory=lambda: [16, 32, 64, 128])
    fpn_dim: int = 32
    gndd: GnddConfig = field(default_factory=GnddConfig)
    dfc: DfcConfig = field(default_factory=DfcConfig)
    fdf: FdfConfig = field(default_factory=FdfConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    seed: int = 0
    synth: Optional[dict] = None
    synth_test: Optional[dict] = None
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def validate(self) -> "ModelConfig":
        if len(self.channels) != 4 or any(c < 1 for c in self.channels):
            raise ConfigError(f"channels must list four positive widths, got {self.channels}")
        if self.fdf.enabled and any((3 * c) % self.fdf.gam.r for c in self.channels):
            raise ConfigError(f"gam.r = {self.fdf.gam.r} must divide 3 x every channel width {self.channels}")
        if self.fpn_dim < 1 or self.fdf.bins < 2 or self.fdf.mi_channels < 1:
            raise ConfigError("fpn_dim, fdf.bins and fdf.mi_channels must be positive (bins >= 2)")
        if self.optim.method.lower() != "adamw":
            raise ConfigError(f"unsupported optimizer {self.optim.method!r}; only 'adamw' is implemented")
        if self.optim.iterations < 1 or self.optim.batch_size < 1 or self.optim.lr <= 0:
            raise ConfigError("optim.iterations, optim.batch_size and optim.lr must be positive")
        if self.gndd.lam < 0:
            raise ConfigError("gndd.lambda must be >= 0")
        try:
            for section in (self.synth, self.synth_test):
                if section is not None:
                    SynthConfig.from_dict(section)
        except (TypeError, ValidationError) as exc:
            raise ConfigError(f"invalid synth section: {exc}") from exc
        return self

    def with_toggles(self, *, dfc: bool, gndd: bool, fdf: bool, seed: Optional[int] = None) -> "ModelConfig":
        cfg = copy.deepcopy(self)
        cfg.dfc.enabled, cfg.gndd.enabled, cfg.fdf.enabled = dfc, gndd, fdf
        if seed is not None:
            cfg.seed = seed
            cfg.gndd.seed = seed
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gndd"]["lambda"] = d["gndd"].pop("lam")
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    @property
    def mi_active(self) -> bool:
        return self.gndd.enabled and self.fdf.enabled


_ALIASES = {"lambda": "lam", "synth.test": "synth_test"}


def _expand_dotted(raw: dict) -> dict:
    out: dict = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            value = _expand_dotted(value)
        parts = str(key).split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        last = parts[-1]
        if isinstance(value, dict) and isinstance(node.get(last), dict):
            node[last].update(value)
        else:
            node[last] = value
    return out


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    kwargs = {}
    names = {f.name: f for f in fields(cls)}
    for key, value in data.items():
        name = _ALIASES.get(key, key)
        if name not in names:
            raise ConfigError(f"unknown config key {path + key!r}")
        default = getattr(cls(), name)
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{path}{key}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(raw: Optional[dict]) -> ModelConfig:
    data = _expand_dotted(raw or {})
    synth = data.get("synth")
    if isinstance(synth, dict) and "test" in synth:
        data["synth_test"] = synth.pop("test")
    return _build(ModelConfig, data, "").validate()


def load_config(path=None) -> ModelConfig:
    """Read a YAML or JSON config file; ``None`` gives the defaults."""
    if path is None:
        return ModelConfig().validate()
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(raw)
