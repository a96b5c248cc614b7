"""Named model configurations, one per ablation row, plus desk-scale settings."""

from __future__ import annotations

from .config import ConfigError, ModelConfig, replace

# (architecture, aggregation, paradigm, norm)
_PRESETS: dict[str, tuple[str, str, str, str]] = {
    # best choice on every axis
    "combined": ("encoder_only", "complete", "direct", "batch"),
    # attention-mechanism rows
    "encoder-only-baseline": ("encoder_only", "none", "direct", "batch"),
    "encoder-only": ("encoder_only", "none", "direct", "batch"),
    "prefix-decoder": ("prefix_decoder", "none", "direct", "batch"),
    "decoder-only": ("decoder_only", "none", "direct", "batch"),
    "double-encoder": ("double_encoder", "none", "direct", "batch"),
    "encoder-decoder": ("encoder_decoder", "none", "direct", "batch"),
    "double-decoder": ("double_decoder", "none", "direct", "batch"),
    # aggregation rows (encoder-only family)
    "no-aggregation": ("encoder_only", "none", "direct", "batch"),
    "partial-aggregation": ("encoder_only", "partial", "direct", "batch"),
    "complete-aggregation": ("encoder_only", "complete", "direct", "batch"),
    # paradigm rows
    "decoder-direct": ("decoder_only", "none", "direct", "batch"),
    "decoder-autoregressive": ("decoder_only", "none", "autoregressive", "batch"),
    "encoder-decoder-direct": ("encoder_decoder", "none", "direct", "batch"),
    "encoder-decoder-autoregressive": ("encoder_decoder", "none", "autoregressive", "batch"),
    # normalization rows
    "encoder-only-ln": ("encoder_only", "complete", "direct", "layer"),
    "encoder-only-bn": ("encoder_only", "complete", "direct", "batch"),
}

# Look-back, patch and first horizon for the weekly Illness series; every other dataset uses the defaults.
ILLNESS_DIMS = {"seq_len": 120, "patch_len": 6, "pred_len": 24}
ILLNESS_LENGTHS = (24, 36, 48, 60)
DEFAULT_LENGTHS = (96, 192, 336, 720)


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def preset(name: str, dataset: str = "", **overrides) -> ModelConfig:
    """Fully specified config for ``name``; ``overrides`` replace any field."""
    try:
        arch, agg, paradigm, norm = _PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(preset_names())}") from None
    base = dict(architecture=arch, aggregation=agg, paradigm=paradigm, norm=norm)
    if dataset.lower() in ("illness", "ili", "national_illness"):
        base.update(ILLNESS_DIMS)
    base.update(overrides)
    return replace(ModelConfig(), **base)


def forecast_lengths(dataset: str) -> tuple[int, ...]:
    return ILLNESS_LENGTHS if dataset.lower() in ("illness", "ili", "national_illness") else DEFAULT_LENGTHS


# Reduced dimensions for single-CPU runs of the ablation comparisons.
DESK_DIMS = {"d_model": 32, "n_heads": 4, "layers": 2, "patch_len": 16, "seq_len": 336, "pred_len": 96}
DESK_TRAIN = {"max_epochs": 10, "patience": 3, "batch_size": 128, "lr": 1e-3}
DESK_DATA = {"train_stride": 4}


def desk(name: str, dataset: str = "", **overrides) -> ModelConfig:
    """``preset`` at desk-scale dimensions."""
    return preset(name, dataset, **{**DESK_DIMS, **overrides})
