"""Model/training configuration and its flat ``key = value`` file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path


class RelationKind(str, Enum):
    CONCAT = "concat"
    MLP = "mlp"
    COATTENTION = "coattention"
    NONE = "none"


# candidate grids the hyperparameters are drawn from
DIM_CANDIDATES = (100, 128, 256, 512, 600, 700, 800, 1024)
DROPOUT_CANDIDATES = (0.1, 0.2, 0.25, 0.3, 0.4, 0.5)


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    d_emb: int = 128
    d: int = 256
    d_k: int = 0  # 0 means "same as d"
    relation: RelationKind = RelationKind.COATTENTION
    layers: int = 3
    dropout: float = 0.25
    dropout_embed: bool = True
    dropout_context: bool = True
    l2: float = 1e-8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    min_freq: int = 1
    # ablations / interpretation switches
    no_self_attention: bool = False
    cnn_context: bool = False
    cnn_kernel: int = 3
    utterance_repr: str = "last_position"  # or "direction_ends"
    shared_fusion_mlp: bool = False
    tie_layers: bool = False
    pre_transform_once: bool = False
    relation_residual: bool = True
    # selection / evaluation
    selection_metric: str = "mean"  # mean | da | sentiment
    protocol: str = "dailydialog"  # dailydialog | mastodon
    exclusion: str = "from_average"  # from_average | from_data
    neutral_label: str = ""

    def __post_init__(self):
        self.relation = RelationKind(self.relation)
        if self.relation is RelationKind.NONE:
            self.layers = 0
        self.validate()

    @property
    def key_dim(self) -> int:
        return self.d_k or self.d

    @property
    def depth(self) -> int:
        return 0 if self.relation is RelationKind.NONE else self.layers

    def validate(self):
        if self.d % 2:
            raise ConfigError(f"d must be even (two LSTM directions of d/2), got {self.d}")
        if min(self.d_emb, self.d) < 1 or self.d_k < 0:
            raise ConfigError("dimensions must be positive")
        if self.relation is not RelationKind.NONE and self.layers < 1:
            raise ConfigError("layers must be >= 1 when a relation layer is used")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.no_self_attention and self.cnn_context:
            raise ConfigError("no_self_attention and cnn_context are mutually exclusive")
        choices = {
            "utterance_repr": ("last_position", "direction_ends"),
            "selection_metric": ("mean", "da", "sentiment"),
            "protocol": ("dailydialog", "mastodon"),
            "exclusion": ("from_average", "from_data"),
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.min_freq < 1 or self.cnn_kernel < 1:
            raise ConfigError("epochs, batch_size, min_freq and cnn_kernel must be >= 1")

    def replace(self, **changes) -> ModelConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["relation"] = self.relation.value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_dict().items())


def _coerce(name: str, raw: str, typ):
    raw = raw.strip()
    try:
        if typ in ("bool", bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ in ("int", int):
            return int(raw)
        if typ in ("float", float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def parse_overrides(pairs) -> dict:
    """``["d=64", "relation=mlp"]`` -> typed dict keyed by ModelConfig field."""
    types = {f.name: f.type for f in fields(ModelConfig)}
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"expected key=value, got {pair!r}")
        k, v = pair.split("=", 1)
        k = k.strip()
        if k not in types:
            raise ConfigError(f"unknown config key {k!r}")
        out[k] = _coerce(k, v, types[k])
    return out


def loads_config(text: str) -> dict:
    lines = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        lines.append(line)
    return parse_overrides(lines)


def load_config(path=None, overrides: dict | None = None) -> ModelConfig:
    values = loads_config(Path(path).read_text(encoding="utf-8")) if path else {}
    values.update(overrides or {})
    try:
        return ModelConfig(**values)
    except ValueError as e:
        raise ConfigError(str(e)) from None
