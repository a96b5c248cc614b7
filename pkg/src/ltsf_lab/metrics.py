from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    return pred, truth


def mse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean((pred - truth) ** 2))


def mae(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


@dataclass
class MetricsReport:
    dataset: str
    arch: str
    mask: str
    aggregation: str
    paradigm: str
    norm: str
    pred_len: int
    seed: int
    mse: float
    mae: float
    n_windows: int
    wall_time_s: Optional[float] = None
    config_digest: str = ""
    train_ratio: float = 1.0

    def __post_init__(self) -> None:
        if self.mse < 0 or self.mae < 0:
            raise ValueError("metrics must be non-negative")
        if self.n_windows <= 0:
            raise ValueError("a report needs at least one window")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)

    @classmethod
    def from_json(cls, line: str) -> "MetricsReport":
        return cls(**json.loads(line))
