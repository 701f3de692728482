"""Run configuration: one JSON document, every key overridable from the command line.

The document may be nested by section or flat::

    {"paths": {"adr": "data/adr.conll"},
     "training": {"lr": 0.01, "seed": 7},
     "weights": {"omega_class": 0.1}}

Key names are unique across sections, so ``--lr 0.01`` overrides
``training.lr``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from .model import ModelDims
from .training import ConfigError, TaskWeights, TrainSettings


@dataclass
class Config:
    # paths
    classification: Optional[str] = None
    adr: Optional[str] = None
    indication: Optional[str] = None
    embeddings: Optional[str] = None
    checkpoint: Optional[str] = None
    output_dir: str = "runs/latest"
    # dims
    word_dim: int = 200
    char_dim: int = 128
    char_hidden: int = 64
    encoder_hidden: int = 128
    attn_dim: int = 128
    tag_dim: int = 16
    # training
    batch_size: int = 16
    dropout: float = 0.5
    lr: float = 0.1
    clip: float = 5.0
    max_epochs: int = 200
    patience: int = 10
    seed: int = 13
    precision32: bool = False
    split: bool = True
    min_count: int = 1
    fixed_embeddings: bool = False
    target_f1: Optional[float] = None
    # weights
    omega_class: float = 0.1
    omega_adr: float = 1.0
    omega_ind: float = 1.0
    # attention
    coverage_window: int = 3
    use_coverage: bool = True

    explicit: set = field(default_factory=set, repr=False, compare=False)

    def validate(self) -> "Config":
        for name in ("word_dim", "char_dim", "char_hidden", "encoder_hidden", "attn_dim",
                     "tag_dim", "batch_size", "max_epochs", "patience", "coverage_window",
                     "min_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.clip < 0:
            raise ConfigError(f"clip must be non-negative, got {self.clip}")
        self.weights()
        return self

    def dims(self) -> ModelDims:
        return ModelDims(self.word_dim, self.char_dim, self.char_hidden, self.encoder_hidden,
                         self.attn_dim, self.tag_dim, self.coverage_window, self.use_coverage)

    def dims_explicit(self) -> bool:
        return bool(self.explicit & set(SECTIONS["dims"]) | self.explicit & {"coverage_window"})

    def weights(self) -> TaskWeights:
        return TaskWeights(self.omega_class, self.omega_adr, self.omega_ind)

    def train_settings(self) -> TrainSettings:
        return TrainSettings(self.batch_size, self.dropout, self.lr, self.clip, self.max_epochs,
                             self.patience, self.seed, self.target_f1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("explicit")
        return {section: {k: d[k] for k in keys} for section, keys in SECTIONS.items()}


SECTIONS = {
    "paths": ("classification", "adr", "indication", "embeddings", "checkpoint", "output_dir"),
    "dims": ("word_dim", "char_dim", "char_hidden", "encoder_hidden", "attn_dim", "tag_dim"),
    "training": ("batch_size", "dropout", "lr", "clip", "max_epochs", "patience", "seed",
                 "precision32", "split", "min_count", "fixed_embeddings", "target_f1"),
    "weights": ("omega_class", "omega_adr", "omega_ind"),
    "attention": ("coverage_window", "use_coverage"),
}
KEYS = {f.name: f for f in fields(Config) if f.name != "explicit"}


def _coerce(name: str, value):
    kind = KEYS[name].type
    if value is None:
        return None
    try:
        if kind in ("int",):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if kind in ("float", "Optional[float]"):
            return float(value)
        if kind in ("bool",):
            if isinstance(value, str):
                if value.lower() in ("1", "true", "yes", "on"):
                    return True
                if value.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError
            return bool(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {value!r} for {name}") from None


def flatten(doc: dict) -> dict:
    flat = {}
    for key, value in doc.items():
        if key in SECTIONS and isinstance(value, dict):
            for sub, v in value.items():
                if sub not in SECTIONS[key]:
                    raise ConfigError(f"unknown key {key}.{sub}")
                flat[sub] = v
        elif key in KEYS:
            flat[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return flat


def load_config(path=None, overrides: dict = None) -> Config:
    values = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        values.update(flatten(doc))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = Config(**{k: _coerce(k, v) for k, v in values.items()})
    cfg.explicit = set(values)
    return cfg.validate()
