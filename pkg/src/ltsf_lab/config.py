"""Configuration dataclasses and the flat ``key = value`` text format.

Every config in the lab round-trips through plain text so that checkpoints,
grid specs and sidecars stay diffable. Keys are unique across
:class:`DataConfig`, :class:`ModelConfig` and :class:`TrainConfig`, which lets a
single flat file describe a whole run.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Iterable

ARCHITECTURES = (
    "encoder_only",
    "prefix_decoder",
    "decoder_only",
    "double_encoder",
    "encoder_decoder",
    "double_decoder",
)
JOINT_ARCHITECTURES = ("encoder_only", "prefix_decoder", "decoder_only")
CROSS_ARCHITECTURES = ("double_encoder", "encoder_decoder", "double_decoder")
AGGREGATIONS = ("none", "partial", "complete", "partial_lookback")
PARADIGMS = ("direct", "autoregressive")
NORMS = ("layer", "batch")

# Mask kind per stack. Joint models have one stack over the whole sequence;
# cross models have (look-back stack, forecasting stack).
ARCH_MASKS: dict[str, tuple[str, ...]] = {
    "encoder_only": ("bi",),
    "prefix_decoder": ("hybrid",),
    "decoder_only": ("uni",),
    "double_encoder": ("bi", "bi"),
    "encoder_decoder": ("bi", "uni"),
    "double_decoder": ("uni", "uni"),
}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass(frozen=True)
class ModelConfig:
    architecture: str = "encoder_only"
    aggregation: str = "complete"
    paradigm: str = "direct"
    norm: str = "batch"
    d_model: int = 512
    n_heads: int = 8
    layers: int = 6
    patch_len: int = 16
    seq_len: int = 512
    pred_len: int = 96
    d_ff: int = 0  # 0 means 4 * d_model
    dropout: float = 0.0
    pre_norm: bool = False
    revin: bool = True
    revin_affine: bool = True
    ar_lookback_loss: bool = False

    def __post_init__(self) -> None:
        self.validate()

    @property
    def ffn_width(self) -> int:
        return self.d_ff or 4 * self.d_model

    @property
    def n_lookback_tokens(self) -> int:
        return self.seq_len // self.patch_len

    @property
    def n_forecast_tokens(self) -> int:
        return self.pred_len // self.patch_len

    @property
    def is_cross(self) -> bool:
        return self.architecture in CROSS_ARCHITECTURES

    @property
    def masks(self) -> tuple[str, ...]:
        return ARCH_MASKS[self.architecture]

    def validate(self) -> None:
        _check_choice("architecture", self.architecture, ARCHITECTURES)
        _check_choice("aggregation", self.aggregation, AGGREGATIONS)
        _check_choice("paradigm", self.paradigm, PARADIGMS)
        _check_choice("norm", self.norm, NORMS)
        for name in ("d_model", "n_heads", "layers", "patch_len", "seq_len", "pred_len"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_ff < 0:
            raise ConfigError("d_ff must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.seq_len % self.patch_len or self.pred_len % self.patch_len:
            raise ConfigError(
                f"seq_len={self.seq_len} and pred_len={self.pred_len} must be multiples "
                f"of patch_len={self.patch_len}"
            )
        if self.is_cross and self.layers % 2:
            raise ConfigError(f"{self.architecture} splits layers evenly; got layers={self.layers}")
        if self.paradigm == "autoregressive":
            if self.aggregation != "none":
                raise ConfigError("autoregressive paradigm requires aggregation=none")
            # A bi-directional forecasting stack would see the patch it is asked to predict.
            if self.masks[-1] == "bi":
                raise ConfigError(f"{self.architecture} has no causal forecasting side; "
                                  "autoregressive decoding is undefined")
        if self.ar_lookback_loss and (self.paradigm != "autoregressive" or self.masks[0] != "uni"):
            raise ConfigError("ar_lookback_loss needs an autoregressive model with a causal look-back stack")

    def label(self) -> str:
        return f"{self.architecture}/{self.aggregation}/{self.paradigm}/{self.norm}"

    def digest(self) -> str:
        return hashlib.sha1(dumps(self).encode()).hexdigest()[:12]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    max_steps: int = 0  # 0 disables the step cap

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if self.batch_size <= 0 or self.max_epochs < 0 or self.max_steps < 0:
            raise ConfigError("batch_size must be positive, max_epochs and max_steps >= 0")


@dataclass(frozen=True)
class DataConfig:
    data_path: str = ""
    dataset: str = ""
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)
    lookback_overlap: bool = True
    train_subset: float = 1.0
    train_stride: int = 1
    eval_stride: int = 1
    raw_scale: bool = False

    def __post_init__(self) -> None:
        if self.train_stride <= 0 or self.eval_stride <= 0:
            raise ConfigError("strides must be positive")
        if not 0.0 < self.train_subset <= 1.0:
            raise ConfigError("train_subset must lie in (0, 1]")


def default_split(dataset: str) -> tuple[float, float, float]:
    """6:2:2 for the ETT family, 7:1:2 otherwise."""
    return (0.6, 0.2, 0.2) if dataset.upper().startswith("ETT") else (0.7, 0.1, 0.2)


def _check_choice(name: str, value: str, choices: Iterable[str]) -> None:
    if value not in choices:
        raise ConfigError(f"unknown {name} {value!r}; expected one of {tuple(choices)}")


# --- key = value text ------------------------------------------------------


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines. ``#`` starts a comment; blank lines are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv(path: str | Path) -> dict[str, str]:
    return parse_kv(Path(path).read_text(encoding="utf-8"))


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def dumps(*configs: Any) -> str:
    lines = []
    for cfg in configs:
        for f in fields(cfg):
            lines.append(f"{f.name} = {format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def write_kv(path: str | Path, *configs: Any, extra: dict[str, Any] | None = None) -> None:
    text = dumps(*configs)
    if extra:
        text += "".join(f"{k} = {format_value(v)}\n" for k, v in extra.items())
    Path(path).write_text(text, encoding="utf-8")


def coerce(value: str, annotation: Any) -> Any:
    """Convert a text value to the type named by a dataclass annotation."""
    kind = str(annotation)
    if kind == "bool":
        lowered = value.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind.startswith("tuple"):
        parts = [p.strip() for p in value.replace(":", ",").split(",") if p.strip()]
        return tuple(float(p) for p in parts)
    return value


def from_kv(cls: type, values: dict[str, str], *, strict: bool = False) -> Any:
    """Build ``cls`` from the subset of ``values`` naming its fields."""
    known = {f.name: f for f in fields(cls)}
    if strict:
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for name, value in values.items():
        if name in known:
            try:
                kwargs[name] = coerce(value, known[name].type)
            except ValueError as exc:
                raise ConfigError(f"{name}: {exc}") from exc
    return cls(**kwargs)


def load_run_config(values: dict[str, str]) -> tuple[DataConfig, ModelConfig, TrainConfig]:
    """Split one flat mapping into the three run configs, rejecting unknown keys."""
    known = {f.name for cls in (DataConfig, ModelConfig, TrainConfig) for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data = from_kv(DataConfig, values)
    if "split" not in values and data.dataset:
        data = dataclasses.replace(data, split=default_split(data.dataset))
    return data, from_kv(ModelConfig, values), from_kv(TrainConfig, values)


def replace(cfg: Any, **changes: Any) -> Any:
    return dataclasses.replace(cfg, **changes)


__all__ = [
    "ARCHITECTURES", "AGGREGATIONS", "PARADIGMS", "NORMS", "ARCH_MASKS",
    "JOINT_ARCHITECTURES", "CROSS_ARCHITECTURES",
    "ConfigError", "ModelConfig", "TrainConfig", "DataConfig", "default_split",
    "parse_kv", "read_kv", "dumps", "write_kv", "from_kv", "load_run_config", "replace",
]
