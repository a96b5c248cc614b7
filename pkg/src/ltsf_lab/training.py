"""Adam training loop with early stopping, and pooled evaluation."""

from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .config import TrainConfig
from .metrics import MetricsReport, mse
from .paradigms import evaluate_variable_length, forecast_windows, training_loss

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_mse: float = math.inf
    steps: int = 0
    stopped_early: bool = False


def _batches(order: np.ndarray, batch_size: int, min_batch: int) -> list[np.ndarray]:
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    # Batch norm cannot train on a single sample; fold a runt batch into its neighbour.
    if len(chunks) > 1 and len(chunks[-1]) < min_batch:
        runt = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], runt])
    return chunks


def validation_mse(model, lookbacks: np.ndarray, targets: np.ndarray) -> float:
    forecast = forecast_windows(model, lookbacks, model.config.pred_len)
    return mse(forecast, targets[:, :model.config.pred_len])


def train(model, train_lb: np.ndarray, train_tg: np.ndarray, val_lb: np.ndarray | None,
          val_tg: np.ndarray | None, cfg: TrainConfig) -> TrainResult:
    """Fit ``model`` in place and restore the best-validation parameters.

    Without validation windows the training loss drives early stopping.
    """
    n = len(train_lb)
    if n == 0:
        raise ValueError("empty training set")
    dtype = next(model.parameters()).dtype
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    x_all = torch.as_tensor(train_lb, dtype=dtype)
    y_all = torch.as_tensor(train_tg, dtype=dtype)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.adam_eps)
    min_batch = 2 if model.config.norm == "batch" else 1
    if min_batch > min(n, cfg.batch_size):
        raise ValueError("batch norm needs at least 2 training windows and batch_size >= 2")

    result = TrainResult()
    best_state = copy.deepcopy(model.state_dict())
    bad_epochs = 0
    for epoch in range(cfg.max_epochs):
        model.train()
        losses = []
        for idx in _batches(rng.permutation(n), cfg.batch_size, min_batch):
            ib = torch.as_tensor(idx)
            loss = training_loss(model, x_all[ib], y_all[ib])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, step {result.steps}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            losses.append(loss.item())
            result.steps += 1
            if cfg.max_steps and result.steps >= cfg.max_steps:
                break
        train_loss = float(np.mean(losses))
        if val_lb is not None and len(val_lb):
            score = validation_mse(model, val_lb, val_tg)
        else:
            score = train_loss
        result.history.append({"epoch": epoch, "train_loss": train_loss, "val_mse": score})
        log.debug("epoch %d train %.6f val %.6f", epoch, train_loss, score)
        if score < result.best_val_mse:
            result.best_val_mse, result.best_epoch = score, epoch
            best_state = copy.deepcopy(model.state_dict())
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > cfg.patience:
                result.stopped_early = True
                break
        if cfg.max_steps and result.steps >= cfg.max_steps:
            break
    model.load_state_dict(best_state)
    model.eval()
    return result


def evaluate(model, lookbacks: np.ndarray, targets: np.ndarray, lengths: list[int], *,
             dataset: str = "", seed: int = 0, train_ratio: float = 1.0,
             timing: bool = False, scale: np.ndarray | None = None,
             shift: np.ndarray | None = None) -> list[MetricsReport]:
    """One pooled report per forecast length; every window element weighs the same."""
    if len(lookbacks) == 0:
        raise ValueError("empty test set")
    start = time.perf_counter()
    scores = evaluate_variable_length(model, lookbacks, targets, lengths, scale=scale, shift=shift)
    elapsed = time.perf_counter() - start
    cfg = model.config
    return [
        MetricsReport(dataset=dataset, arch=cfg.architecture, mask="+".join(cfg.masks),
                      aggregation=cfg.aggregation, paradigm=cfg.paradigm, norm=cfg.norm,
                      pred_len=s["pred_len"], seed=seed, mse=s["mse"], mae=s["mae"],
                      n_windows=s["n_windows"], wall_time_s=round(elapsed, 3) if timing else None,
                      config_digest=cfg.digest(), train_ratio=train_ratio)
        for s in scores
    ]
