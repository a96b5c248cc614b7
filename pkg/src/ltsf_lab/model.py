"""Assembly of the six taxonomy architectures and checkpoint I/O."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any

import numpy as np
import torch
from torch import Tensor, nn

from .config import ModelConfig, dumps, from_kv, read_kv
from .heads import ForecastHead
from .layers import FeedForward, MultiHeadAttention, RevIN, build_mask, make_norm, patchify

POS_INIT_STD = 0.02


class Block(nn.Module):
    """Self-attention (+ optional cross-attention) and FFN, each wrapped in residual + norm."""

    def __init__(self, cfg: ModelConfig, cross: bool = False):
        super().__init__()
        d = cfg.d_model
        self.pre_norm = cfg.pre_norm
        self.self_attn = MultiHeadAttention(d, cfg.n_heads, cfg.dropout)
        self.norm_self = make_norm(cfg.norm, d)
        self.cross_attn = MultiHeadAttention(d, cfg.n_heads, cfg.dropout) if cross else None
        self.norm_cross = make_norm(cfg.norm, d) if cross else None
        self.ffn = FeedForward(d, cfg.ffn_width, cfg.dropout)
        self.norm_ffn = make_norm(cfg.norm, d)
        self.dropout = nn.Dropout(cfg.dropout)

    def _sublayer(self, x: Tensor, norm: nn.Module, fn) -> tuple[Tensor, Any]:
        if self.pre_norm:
            out, extra = fn(norm(x))
            return x + self.dropout(out), extra
        out, extra = fn(x)
        return norm(x + self.dropout(out)), extra

    def forward(self, x: Tensor, mask: Tensor, memory: Tensor | None = None,
                capture: list | None = None, tag: tuple = ()) -> Tensor:
        x, w = self._sublayer(x, self.norm_self, lambda h: self.self_attn(h, mask=mask))
        if capture is not None:
            capture.append({"stack": tag[0], "layer": tag[1], "kind": "self", "weights": w.detach()})
        if self.cross_attn is not None:
            if memory is None:
                raise ValueError("cross-attention block needs encoder memory")
            x, w = self._sublayer(x, self.norm_cross, lambda h: self.cross_attn(h, memory))
            if capture is not None:
                capture.append({"stack": tag[0], "layer": tag[1], "kind": "cross", "weights": w.detach()})
        x, _ = self._sublayer(x, self.norm_ffn, lambda h: (self.ffn(h), None))
        return x


class Stack(nn.Module):
    def __init__(self, cfg: ModelConfig, depth: int, mask_kind: str, cross: bool = False):
        super().__init__()
        self.mask_kind = mask_kind
        self.blocks = nn.ModuleList(Block(cfg, cross) for _ in range(depth))
        self.final_norm = make_norm(cfg.norm, cfg.d_model) if cfg.pre_norm else None

    def forward(self, x: Tensor, n_lookback: int, n_forecast: int, memory: Tensor | None = None,
                capture: list | None = None, stack_id: int = 0) -> Tensor:
        mask = build_mask(self.mask_kind, n_lookback, n_forecast, device=x.device)
        for i, block in enumerate(self.blocks):
            x = block(x, mask, memory, capture, (stack_id, i))
        return self.final_norm(x) if self.final_norm is not None else x


class ForecastModel(nn.Module):
    """Patch embedder, one or two attention stacks, and an aggregation head.

    Joint-attention architectures run a single stack over
    ``[look-back tokens | forecasting tokens]``; cross-attention architectures
    run a look-back stack and a forecasting stack linked by cross-attention.
    All tensors inside the network live on the RevIN-normalized scale.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        d, n_lb, n_fc = config.d_model, config.n_lookback_tokens, config.n_forecast_tokens
        self.patch_embed = nn.Linear(config.patch_len, d)
        self.pos = nn.Parameter(torch.zeros(n_lb + n_fc, d))
        self.placeholder = nn.Parameter(torch.zeros(d))
        kinds = config.masks
        if config.is_cross:
            half = config.layers // 2
            self.stacks = nn.ModuleList([Stack(config, half, kinds[0]), Stack(config, half, kinds[1], cross=True)])
        else:
            self.stacks = nn.ModuleList([Stack(config, config.layers, kinds[0])])
        self.head = ForecastHead(config.aggregation, d, n_lb, n_fc, config.patch_len)
        self.revin = RevIN(config.revin_affine) if config.revin else None

    # -- scale handling --------------------------------------------------

    def normalize(self, lookback: Tensor) -> tuple[Tensor, Any]:
        if self.revin is None:
            return lookback, None
        return self.revin.normalize(lookback)

    def normalize_with(self, x: Tensor, stats: Any) -> Tensor:
        return x if self.revin is None else self.revin.apply_stats(x, stats)

    def denormalize(self, y: Tensor, stats: Any) -> Tensor:
        return y if self.revin is None else self.revin.denormalize(y, stats)

    # -- token construction ------------------------------------------------

    def embed(self, patches: Tensor, position_offset: int = 0) -> Tensor:
        """``(B, P, patch_len)`` -> ``(B, P, d)`` with positional rows from ``position_offset``."""
        p = patches.shape[-2]
        if position_offset < 0 or position_offset + p > self.pos.shape[0]:
            raise IndexError(f"positions {position_offset}..{position_offset + p - 1} exceed the "
                             f"positional table of {self.pos.shape[0]}")
        return self.patch_embed(patches) + self.pos[position_offset:position_offset + p]

    def placeholders(self, batch: int, n: int, position_offset: int) -> Tensor:
        pos = self.pos[position_offset:position_offset + n]
        return (self.placeholder + pos).unsqueeze(0).expand(batch, -1, -1)

    # -- latent computation --------------------------------------------------

    def encode(self, lb_tokens: Tensor, fc_tokens: Tensor, capture: list | None = None) -> tuple[Tensor, Tensor]:
        """Run the attention stacks; returns latent (look-back, forecasting) tokens."""
        n_lb, n_fc = lb_tokens.shape[-2], fc_tokens.shape[-2]
        if not self.config.is_cross:
            h = self.stacks[0](torch.cat([lb_tokens, fc_tokens], dim=-2), n_lb, n_fc, capture=capture)
            return h[:, :n_lb], h[:, n_lb:]
        enc = self.stacks[0](lb_tokens, n_lb, 0, capture=capture, stack_id=0)
        dec = self.stacks[1](fc_tokens, 0, n_fc, memory=enc, capture=capture, stack_id=1)
        return enc, dec

    def latent(self, x_norm: Tensor, capture: list | None = None) -> tuple[Tensor, Tensor]:
        """Direct-paradigm latents for a normalized look-back ``(B, L)``."""
        cfg = self.config
        if x_norm.shape[-1] != cfg.seq_len:
            raise ValueError(f"look-back length {x_norm.shape[-1]} != seq_len {cfg.seq_len}")
        n_lb, n_fc = cfg.n_lookback_tokens, cfg.n_forecast_tokens
        lb = self.embed(patchify(x_norm, cfg.patch_len), 0)
        fc = self.placeholders(x_norm.shape[0], n_fc, n_lb)
        return self.encode(lb, fc, capture)

    def head_input(self, x_norm: Tensor) -> Tensor:
        h_lb, h_fc = self.latent(x_norm)
        return self.head.select(h_lb, h_fc)

    def forward(self, lookback: Tensor, capture: list | None = None) -> Tensor:
        """Direct-mapping forecast ``(B, L)`` -> ``(B, pred_len)`` on the input scale."""
        if self.config.paradigm != "direct":
            raise RuntimeError("forward() is the direct-mapping path; use paradigms.predict for autoregressive models")
        if not torch.isfinite(lookback).all():
            raise ValueError("look-back contains NaN or inf")
        x, stats = self.normalize(lookback)
        h_lb, h_fc = self.latent(x, capture)
        return self.denormalize(self.head(self.head.select(h_lb, h_fc)), stats)

    def next_patches(self, x_norm: Tensor, fc_patches: Tensor, include_lookback: bool = False,
                     capture: list | None = None) -> Tensor:
        """Next-patch predictions given the look-back and ``k`` known forecast patches.

        Returns ``(B, k + 1, patch_len)``: row ``i`` predicts forecast patch ``i``
        from everything before it. With ``include_lookback`` the look-back
        positions' next-patch predictions (look-back patches 1..P_lb-1) are
        prepended.
        """
        cfg = self.config
        lb_patches = patchify(x_norm, cfg.patch_len)
        n_lb, k = lb_patches.shape[-2], fc_patches.shape[-2]
        if k >= cfg.n_forecast_tokens:
            raise IndexError(f"{k} known forecast patches leave no forecasting position to predict")
        if cfg.is_cross:
            lb = self.embed(lb_patches, 0)
            dec_in = torch.cat([lb_patches[:, -1:], fc_patches], dim=-2)
            h_lb, h_fc = self.encode(lb, self.embed(dec_in, n_lb), capture)
            h = torch.cat([h_lb[:, :-1], h_fc], dim=-2) if include_lookback else h_fc
        else:
            tokens = self.embed(torch.cat([lb_patches, fc_patches], dim=-2), 0)
            h_lb, h_fc = self.encode(tokens[:, :n_lb], tokens[:, n_lb:], capture)
            h = torch.cat([h_lb, h_fc], dim=-2)
            h = h if include_lookback else h[:, n_lb - 1:]
        return self.head.per_token(h)


def _init_parameters(model: ForecastModel, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, nn.Linear):
                bound = 1.0 / math.sqrt(module.in_features)
                module.weight.uniform_(-bound, bound, generator=gen)
                if module.bias is not None:
                    module.bias.zero_()
        model.pos.normal_(0.0, POS_INIT_STD, generator=gen)
        model.placeholder.normal_(0.0, POS_INIT_STD, generator=gen)


def assemble(config: ModelConfig, rng_seed: int = 0, dtype: torch.dtype = torch.float32) -> ForecastModel:
    """Build and deterministically initialise a model for ``config``."""
    config.validate()
    model = ForecastModel(config)
    _init_parameters(model, rng_seed)
    return model.to(dtype)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


# --- checkpoints -----------------------------------------------------------------

MANIFEST = "manifest.txt"
TENSORS = "params.bin"
CONFIG = "config.txt"


def save_checkpoint(model: ForecastModel, directory: str | Path, *extra_configs: Any,
                    extra: dict[str, Any] | None = None) -> Path:
    """Dump every parameter and buffer as little-endian float64, row-major.

    ``manifest.txt`` lists ``name<TAB>shape`` in file order; ``config.txt``
    holds the model config followed by any extra configs as key = value.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    with (directory / TENSORS).open("wb") as fh:
        for name, tensor in model.state_dict().items():
            arr = tensor.detach().cpu().to(torch.float64).numpy()
            fh.write(np.ascontiguousarray(arr).astype("<f8").tobytes())
            lines.append(f"{name}\t{'x'.join(map(str, arr.shape)) or 'scalar'}")
    (directory / MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")
    text = dumps(model.config, *extra_configs)
    if extra:
        text += "".join(f"{k} = {v}\n" for k, v in extra.items())
    (directory / CONFIG).write_text(text, encoding="utf-8")
    return directory


def load_checkpoint(directory: str | Path, dtype: torch.dtype = torch.float32) -> tuple[ForecastModel, dict[str, str]]:
    """Rebuild the model from a checkpoint; returns it with the raw config mapping."""
    directory = Path(directory)
    values = read_kv(directory / CONFIG)
    config = from_kv(ModelConfig, values)
    model = ForecastModel(config).to(dtype)
    raw = np.frombuffer((directory / TENSORS).read_bytes(), dtype="<f8")
    state, cursor = {}, 0
    for line in (directory / MANIFEST).read_text(encoding="utf-8").splitlines():
        name, shape_text = line.split("\t")
        shape = () if shape_text == "scalar" else tuple(int(s) for s in shape_text.split("x"))
        size = int(np.prod(shape)) if shape else 1
        state[name] = torch.from_numpy(raw[cursor:cursor + size].reshape(shape).copy()).to(dtype)
        cursor += size
    if cursor != raw.size:
        raise ValueError(f"{directory}: manifest covers {cursor} values, file has {raw.size}")
    model.load_state_dict(state)
    return model, values
