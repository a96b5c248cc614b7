"""One train-and-evaluate run from the three flat configs."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import DataConfig, ModelConfig, TrainConfig
from .metrics import MetricsReport
from .model import ForecastModel, assemble, save_checkpoint
from .series import DataError, PreparedData, SeriesFrame, SplitSpec, load_csv, prepare
from .synthetic import generate
from .training import TrainResult, evaluate, train

SYNTHETIC_PREFIX = "synthetic:"


def load_dataset(data: DataConfig) -> SeriesFrame:
    """Read ``data_path``; ``synthetic:<name>`` selects a built-in generator."""
    if data.data_path.startswith(SYNTHETIC_PREFIX):
        try:
            return generate(data.data_path[len(SYNTHETIC_PREFIX):])
        except ValueError as exc:
            raise DataError(str(exc)) from None
    return load_csv(data.data_path, name=data.dataset or None)


def split_spec(data: DataConfig) -> SplitSpec:
    return SplitSpec(*data.split, lookback_overlap=data.lookback_overlap)


def prepare_data(frame: SeriesFrame, data: DataConfig, model: ModelConfig, test_horizon: int | None = None) -> PreparedData:
    return prepare(frame, split_spec(data), model.seq_len, model.pred_len, train_subset=data.train_subset,
                   train_stride=data.train_stride, eval_stride=data.eval_stride, test_horizon=test_horizon)


@dataclass
class RunOutcome:
    model: ForecastModel
    reports: list[MetricsReport]
    train_result: TrainResult
    data: PreparedData
    wall_time_s: float


def run_experiment(data_cfg: DataConfig, model_cfg: ModelConfig, train_cfg: TrainConfig,
                   lengths: list[int] | None = None, frame: SeriesFrame | None = None,
                   dtype: torch.dtype = torch.float32, timing: bool = False,
                   checkpoint_dir: str | Path | None = None) -> RunOutcome:
    """Prepare windows, train from ``train_cfg.seed``, and score every requested length."""
    start = time.perf_counter()
    frame = frame if frame is not None else load_dataset(data_cfg)
    lengths = list(lengths or [model_cfg.pred_len])
    data = prepare_data(frame, data_cfg, model_cfg, test_horizon=max(max(lengths), model_cfg.pred_len))
    model = assemble(model_cfg, train_cfg.seed, dtype)
    result = train(model, data.train.lookback, data.train.target, data.val.lookback, data.val.target, train_cfg)
    scale = shift = None
    if data_cfg.raw_scale:
        scale = data.standardizer.std[data.test.channel]
        shift = data.standardizer.mean[data.test.channel]
    reports = evaluate(model, data.test.lookback, data.test.target, lengths,
                       dataset=data_cfg.dataset or frame.name, seed=train_cfg.seed,
                       train_ratio=data_cfg.train_subset, scale=scale, shift=shift)
    elapsed = time.perf_counter() - start
    if timing:
        for r in reports:
            r.wall_time_s = round(elapsed, 3)
    if checkpoint_dir is not None:
        save_checkpoint(model, checkpoint_dir, data_cfg, train_cfg)
        (Path(checkpoint_dir) / "standardizer.txt").write_text(data.standardizer.to_text(), encoding="utf-8")
    return RunOutcome(model, reports, result, data, elapsed)


def mean_mse(reports: list[MetricsReport]) -> float:
    return float(np.mean([r.mse for r in reports]))
