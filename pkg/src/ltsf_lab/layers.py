"""Transformer building blocks written against plain torch tensors.

Shapes follow ``(batch, tokens, features)`` throughout. Attention masks are
boolean with ``True`` meaning "may attend".
"""

from __future__ import annotations

import math

import torch
from torch import Tensor, nn

SIGMA_FLOOR = 1e-8


def patchify(series: Tensor, patch_len: int) -> Tensor:
    """``(..., n)`` -> ``(..., n // patch_len, patch_len)``; non-overlapping."""
    n = series.shape[-1]
    if n % patch_len:
        raise ValueError(f"length {n} is not a multiple of patch_len={patch_len}")
    return series.reshape(*series.shape[:-1], n // patch_len, patch_len)


def unpatchify(patches: Tensor) -> Tensor:
    return patches.reshape(*patches.shape[:-2], -1)


# --- masks -------------------------------------------------------------------


def build_mask(kind: str, n_lookback: int, n_forecast: int, device=None) -> Tensor:
    """Boolean (P, P) mask over ``n_lookback + n_forecast`` tokens.

    ``hybrid`` is the prefix-LM pattern: look-back rows see the look-back
    block only, forecasting rows see the look-back block plus earlier (and
    their own) forecasting positions.
    """
    if n_lookback < 0 or n_forecast < 0:
        raise ValueError("token counts must be non-negative")
    p = n_lookback + n_forecast
    if p < 1:
        raise ValueError("mask over an empty sequence")
    if kind == "bi":
        return torch.ones(p, p, dtype=torch.bool, device=device)
    causal = torch.tril(torch.ones(p, p, dtype=torch.bool, device=device))
    if kind == "uni":
        return causal
    if kind == "hybrid":
        mask = causal.clone()
        mask[:n_lookback, :n_lookback] = True
        return mask
    raise ValueError(f"unknown mask kind {kind!r}")


# --- attention -----------------------------------------------------------------


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, mask: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """softmax(q k^T / sqrt(d_k)) v with masked logits excluded.

    Returns ``(output, weights)``. Raises if any query row has no visible key.
    """
    d_k = q.shape[-1]
    logits = q @ k.transpose(-2, -1) / math.sqrt(d_k)
    if mask is not None:
        if not bool(mask.any(dim=-1).all()):
            raise ValueError("attention mask has a fully masked row")
        logits = logits.masked_fill(~mask, float("-inf"))
    weights = torch.softmax(logits, dim=-1)
    return weights @ v, weights


class MultiHeadAttention(nn.Module):
    """Multi-head attention with per-head column blocks of W_Q, W_K, W_V.

    Self-attention passes the same tokens as query and memory; cross-attention
    takes queries from the forecasting side and keys/values from the memory.
    """

    def __init__(self, d_model: int, n_heads: int, dropout: float = 0.0):
        super().__init__()
        if d_model % n_heads:
            raise ValueError(f"d_model={d_model} not divisible by n_heads={n_heads}")
        self.d_model, self.n_heads, self.d_head = d_model, n_heads, d_model // n_heads
        self.w_q = nn.Linear(d_model, d_model, bias=False)
        self.w_k = nn.Linear(d_model, d_model, bias=False)
        self.w_v = nn.Linear(d_model, d_model, bias=False)
        self.w_o = nn.Linear(d_model, d_model, bias=False)
        self.dropout = nn.Dropout(dropout)

    def _heads(self, x: Tensor) -> Tensor:
        b, p, _ = x.shape
        return x.reshape(b, p, self.n_heads, self.d_head).transpose(1, 2)

    def forward(self, query: Tensor, memory: Tensor | None = None, mask: Tensor | None = None) -> tuple[Tensor, Tensor]:
        memory = query if memory is None else memory
        if query.shape[-1] != self.d_model or memory.shape[-1] != self.d_model:
            raise ValueError(f"expected width {self.d_model}, got {query.shape[-1]} and {memory.shape[-1]}")
        q, k, v = self._heads(self.w_q(query)), self._heads(self.w_k(memory)), self._heads(self.w_v(memory))
        out, weights = scaled_dot_attention(q, k, v, mask)
        out = self.dropout(out)
        b, _, p, _ = out.shape
        return self.w_o(out.transpose(1, 2).reshape(b, p, self.d_model)), weights


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int, dropout: float = 0.0):
        super().__init__()
        self.lin1 = nn.Linear(d_model, d_ff)
        self.lin2 = nn.Linear(d_ff, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        return self.lin2(self.dropout(torch.relu(self.lin1(x))))


def mhsa(tokens: Tensor, mask: Tensor | None, weights: MultiHeadAttention) -> Tensor:
    """Masked multi-head self-attention; ``weights`` holds W_Q, W_K, W_V, W_O."""
    return weights(tokens, None, mask)[0]


def mhca(decoder_tokens: Tensor, encoder_tokens: Tensor, weights: MultiHeadAttention) -> Tensor:
    """Unmasked cross-attention: queries from the decoder, keys and values from the encoder."""
    return weights(decoder_tokens, encoder_tokens, None)[0]


def ffn(tokens: Tensor, weights: FeedForward) -> Tensor:
    return weights(tokens)


# --- normalization ---------------------------------------------------------------


def _floored_std(var: Tensor) -> Tensor:
    return var.clamp_min(SIGMA_FLOOR**2).sqrt()


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Statistics over the feature axis of every token."""
    mu = x.mean(dim=-1, keepdim=True)
    var = ((x - mu) ** 2).mean(dim=-1, keepdim=True)
    return (x - mu) / _floored_std(var) * gamma + beta


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, *, training: bool = True,
               running_mean: Tensor | None = None, running_var: Tensor | None = None,
               momentum: float = 0.1) -> Tensor:
    """Statistics per feature over every other axis (batch and tokens).

    In training mode the running buffers, when given, are updated in place.
    In eval mode they are required and used instead of batch statistics.
    """
    axes = tuple(range(x.dim() - 1))
    if training:
        if x.shape[0] < 2:
            raise ValueError("batch_norm in training mode needs a batch of at least 2 samples")
        mu = x.mean(dim=axes)
        var = ((x - mu) ** 2).mean(dim=axes)
        if running_mean is not None and running_var is not None:
            with torch.no_grad():
                running_mean.mul_(1 - momentum).add_(momentum * mu.detach())
                running_var.mul_(1 - momentum).add_(momentum * var.detach())
    else:
        if running_mean is None or running_var is None:
            raise ValueError("batch_norm in eval mode needs running statistics")
        mu, var = running_mean, running_var
    return (x - mu) / _floored_std(var) * gamma + beta


class LayerNorm(nn.Module):
    def __init__(self, d_model: int):
        super().__init__()
        self.gamma = nn.Parameter(torch.ones(d_model))
        self.beta = nn.Parameter(torch.zeros(d_model))

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)


class BatchNorm(nn.Module):
    def __init__(self, d_model: int, momentum: float = 0.1):
        super().__init__()
        self.momentum = momentum
        self.gamma = nn.Parameter(torch.ones(d_model))
        self.beta = nn.Parameter(torch.zeros(d_model))
        self.register_buffer("running_mean", torch.zeros(d_model))
        self.register_buffer("running_var", torch.ones(d_model))

    def forward(self, x: Tensor) -> Tensor:
        return batch_norm(x, self.gamma, self.beta, training=self.training,
                          running_mean=self.running_mean, running_var=self.running_var,
                          momentum=self.momentum)


def make_norm(kind: str, d_model: int) -> nn.Module:
    if kind == "layer":
        return LayerNorm(d_model)
    if kind == "batch":
        return BatchNorm(d_model)
    raise ValueError(f"unknown norm {kind!r}")


# --- instance normalization ------------------------------------------------------


class RevIN(nn.Module):
    """Per-instance normalization of the look-back, reversed on the forecast.

    Statistics are computed over the look-back of each instance and detached,
    so gradients flow through the affine terms only.
    """

    def __init__(self, affine: bool = True):
        super().__init__()
        self.affine = affine
        if affine:
            self.gamma = nn.Parameter(torch.ones(1))
            self.beta = nn.Parameter(torch.zeros(1))

    def normalize(self, x: Tensor) -> tuple[Tensor, tuple[Tensor, Tensor]]:
        mean = x.mean(dim=-1, keepdim=True).detach()
        std = _floored_std(x.var(dim=-1, unbiased=False, keepdim=True)).detach()
        return self.apply_stats(x, (mean, std)), (mean, std)

    def apply_stats(self, x: Tensor, stats: tuple[Tensor, Tensor]) -> Tensor:
        """Normalize ``x`` with statistics captured from another window."""
        mean, std = stats
        y = (x - mean) / std
        if self.affine:
            y = y * self.gamma + self.beta
        return y

    def denormalize(self, y: Tensor, stats: tuple[Tensor, Tensor]) -> Tensor:
        mean, std = stats
        if self.affine:
            g = self.gamma
            g = torch.where(g.abs() < SIGMA_FLOOR, torch.where(g < 0, -SIGMA_FLOOR, SIGMA_FLOOR).to(g), g)
            y = (y - self.beta) / g
        return y * std + mean


def revin_normalize(x: Tensor) -> tuple[Tensor, tuple[Tensor, Tensor]]:
    return RevIN(affine=False).normalize(x)


def revin_denormalize(y: Tensor, stats: tuple[Tensor, Tensor]) -> Tensor:
    return RevIN(affine=False).denormalize(y, stats)
