"""Direct-mapping and autoregressive forecasting.

Autoregressive models advance one patch per model call. Training uses
teacher forcing: the forecasting-side inputs are the ground-truth patches
shifted right by one, so every position predicts the patch after it in a
single batched pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor

from .layers import patchify, unpatchify
from .metrics import mae, mse


@dataclass(frozen=True)
class ParadigmSpec:
    kind: str
    max_len: int
    step: int

    def calls_for(self, horizon: int) -> int:
        return 1 if self.kind == "direct" else math.ceil(horizon / self.step)


def paradigm_spec(model) -> ParadigmSpec:
    cfg = model.config
    return ParadigmSpec(cfg.paradigm, cfg.pred_len, cfg.patch_len)


def direct_forward(model, lookback: Tensor) -> Tensor:
    """One forward pass producing the full training horizon."""
    return model(lookback)


def teacher_forced_predictions(model, lookback: Tensor, target: Tensor,
                               include_lookback: bool = False) -> Tensor:
    """Per-position next-patch predictions with ground-truth inputs.

    Returns predictions on the input scale, shape ``(B, P_fc * patch_len)``
    (with look-back predictions prepended when ``include_lookback``).
    """
    cfg = model.config
    if target.shape[-1] % cfg.patch_len:
        raise ValueError(f"target length {target.shape[-1]} is not patch-aligned (patch_len={cfg.patch_len})")
    x, stats = model.normalize(lookback)
    y = patchify(model.normalize_with(target, stats), cfg.patch_len)
    preds = model.next_patches(x, y[:, :-1], include_lookback=include_lookback)
    return model.denormalize(unpatchify(preds), stats)


def teacher_forced_loss(model, lookback: Tensor, target: Tensor) -> Tensor:
    """MSE over all forecasting-window next-patch predictions."""
    include = model.config.ar_lookback_loss
    preds = teacher_forced_predictions(model, lookback, target, include_lookback=include)
    truth = torch.cat([lookback[:, model.config.patch_len:], target], dim=-1) if include else target
    return torch.mean((preds - truth) ** 2)


def generate_autoregressive(model, lookback: Tensor, horizon: int) -> Tensor:
    """Free-running rollout of ``ceil(horizon / patch_len)`` model calls.

    Each call sees the look-back and every patch generated so far. RevIN
    statistics stay frozen at the original look-back's. When the generated
    patches fill the positional table, the most recent ``seq_len`` values
    become the new look-back and generation continues.
    """
    cfg = model.config
    p = cfg.patch_len
    steps = math.ceil(horizon / p)
    capacity = cfg.n_forecast_tokens
    x, stats = model.normalize(lookback)
    context = x
    known = x.new_zeros(x.shape[0], 0, p)
    out = []
    for _ in range(steps):
        if known.shape[-2] == capacity:
            context = torch.cat([context, unpatchify(known)], dim=-1)[:, -cfg.seq_len:]
            known = known[:, :0]
        nxt = model.next_patches(context, known)[:, -1:]
        out.append(nxt)
        known = torch.cat([known, nxt], dim=-2)
    forecast = unpatchify(torch.cat(out, dim=-2))[:, :horizon]
    return model.denormalize(forecast, stats)


def predict(model, lookback: Tensor, horizon: int | None = None) -> Tensor:
    """Forecast ``horizon`` values (default: the training horizon) on the input scale."""
    cfg = model.config
    horizon = cfg.pred_len if horizon is None else horizon
    if cfg.paradigm == "direct":
        if horizon > cfg.pred_len:
            raise ValueError(f"direct model trained for {cfg.pred_len} steps cannot forecast {horizon}")
        return direct_forward(model, lookback)[:, :horizon]
    return generate_autoregressive(model, lookback, horizon)


def training_loss(model, lookback: Tensor, target: Tensor) -> Tensor:
    if model.config.paradigm == "direct":
        return torch.mean((model(lookback) - target) ** 2)
    return teacher_forced_loss(model, lookback, target)


@torch.no_grad()
def forecast_windows(model, lookbacks: np.ndarray, horizon: int, batch_size: int = 512) -> np.ndarray:
    """Eval-mode forecasts for an array of look-backs, batched."""
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    try:
        parts = []
        for start in range(0, len(lookbacks), batch_size):
            lb = torch.as_tensor(lookbacks[start:start + batch_size], dtype=dtype)
            parts.append(predict(model, lb, horizon).to(torch.float64).numpy())
        return np.concatenate(parts) if parts else np.empty((0, horizon))
    finally:
        model.train(was_training)


def evaluate_variable_length(model, lookbacks: np.ndarray, targets: np.ndarray,
                             lengths: list[int], batch_size: int = 512,
                             scale: np.ndarray | None = None, shift: np.ndarray | None = None) -> list[dict]:
    """Score one model at several horizons.

    Direct models forecast their training horizon once and are scored on
    prefixes. Autoregressive rollouts are prefix-stable, so one rollout to the
    longest requested horizon serves every shorter one. ``scale``/``shift``
    (one entry per window) move forecasts and targets to another scale first.
    """
    if len(lookbacks) == 0:
        raise ValueError("no evaluation windows")
    cfg = model.config
    longest = max(lengths)
    if cfg.paradigm == "direct" and longest > cfg.pred_len:
        raise ValueError(f"length {longest} exceeds the direct model's horizon {cfg.pred_len}")
    if targets.shape[-1] < longest:
        raise ValueError(f"targets cover {targets.shape[-1]} steps, need {longest}")
    forecast = forecast_windows(model, lookbacks, longest, batch_size)
    targets = targets[:, :longest]
    if scale is not None:
        # Per-window affine map back to another scale, e.g. undoing z-scoring.
        forecast = forecast * scale[:, None] + shift[:, None]
        targets = targets * scale[:, None] + shift[:, None]
    results = []
    for n in lengths:
        pred, truth = forecast[:, :n], targets[:, :n]
        results.append({"pred_len": n, "mse": mse(pred, truth), "mae": mae(pred, truth),
                        "n_windows": len(lookbacks), "forecast": pred})
    return results
