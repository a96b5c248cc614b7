"""Prediction heads for the three aggregation strategies.

``none`` projects each forecasting token to one patch with a shared map;
``partial`` flattens the forecasting tokens and projects to the horizon;
``complete`` flattens look-back and forecasting tokens together.
"""

from __future__ import annotations

import torch
from torch import Tensor, nn


def head_none(h_fc: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``(B, P_fc, d)`` -> ``(B, P_fc * patch_len)``; weight is ``(patch_len, d)``."""
    if h_fc.shape[-1] != weight.shape[1]:
        raise ValueError(f"token width {h_fc.shape[-1]} does not match head input {weight.shape[1]}")
    out = h_fc @ weight.T + bias
    return out.reshape(*out.shape[:-2], -1)


def head_flatten(h: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``(B, P, d)`` -> ``(B, T)`` through one projection of the flattened tokens."""
    flat = h.reshape(*h.shape[:-2], -1)
    if flat.shape[-1] != weight.shape[1]:
        raise ValueError(f"flattened width {flat.shape[-1]} does not match head input {weight.shape[1]}")
    return flat @ weight.T + bias


head_partial = head_flatten
head_complete = head_flatten


class ForecastHead(nn.Module):
    def __init__(self, kind: str, d_model: int, n_lookback: int, n_forecast: int, patch_len: int):
        super().__init__()
        self.kind = kind
        self.n_lookback, self.n_forecast = n_lookback, n_forecast
        horizon = n_forecast * patch_len
        n_in = {"none": 1, "partial": n_forecast, "partial_lookback": n_lookback,
                "complete": n_lookback + n_forecast}.get(kind)
        if n_in is None:
            raise ValueError(f"unknown aggregation {kind!r}")
        out = patch_len if kind == "none" else horizon
        self.proj = nn.Linear(n_in * d_model, out)

    def select(self, h_lookback: Tensor, h_forecast: Tensor) -> Tensor:
        """The latent tokens this head consumes, in sequence order."""
        if self.kind in ("none", "partial"):
            return h_forecast
        if self.kind == "partial_lookback":
            return h_lookback
        return torch.cat([h_lookback, h_forecast], dim=-2)

    def forward(self, h: Tensor) -> Tensor:
        if self.kind == "none":
            return head_none(h, self.proj.weight, self.proj.bias)
        return head_flatten(h, self.proj.weight, self.proj.bias)

    def per_token(self, h: Tensor) -> Tensor:
        """Shared projection of every token to a patch: ``(B, P, d)`` -> ``(B, P, patch_len)``."""
        if self.kind != "none":
            raise ValueError("per-token projection exists only for aggregation=none")
        return self.proj(h)
