"""Outlier statistics and attention-map export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .series import DataError, SeriesFrame


@dataclass(frozen=True)
class AnomalySpec:
    sample_len: int = 512
    outlier_fraction_threshold: float = 0.05
    iqr_k: float = 1.5

    def __post_init__(self) -> None:
        if self.sample_len <= 0:
            raise ValueError("sample_len must be positive")
        if not 0 < self.outlier_fraction_threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.iqr_k <= 0:
            raise ValueError("iqr_k must be positive")


def iqr_outliers(values: np.ndarray, k: float = 1.5) -> np.ndarray:
    """Boolean mask of entries outside [Q1 - k*IQR, Q3 + k*IQR], per column.

    Quartiles interpolate linearly between order statistics.
    """
    values = np.asarray(values, dtype=np.float64)
    q1, q3 = np.percentile(values, [25, 75], axis=0)
    iqr = q3 - q1
    return (values < q1 - k * iqr) | (values > q3 + k * iqr)


def anomaly_sample_ratio(frame: SeriesFrame | np.ndarray, spec: AnomalySpec = AnomalySpec()) -> float:
    """Share of stride-1 windows (pooled over channels) whose outlier share exceeds the threshold."""
    values = frame.values if isinstance(frame, SeriesFrame) else np.asarray(frame, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    n, s = values.shape[0], spec.sample_len
    if s > n:
        raise DataError(f"sample_len={s} exceeds series length {n}")
    flags = iqr_outliers(values, spec.iqr_k).astype(np.int64)
    csum = np.vstack([np.zeros((1, flags.shape[1]), dtype=np.int64), np.cumsum(flags, axis=0)])
    counts = csum[s:] - csum[:-s]  # (n - s + 1, channels)
    anomalous = counts / s > spec.outlier_fraction_threshold
    return float(anomalous.sum() / anomalous.size)


# --- attention maps ----------------------------------------------------------------


def capture_attention(model, lookback: torch.Tensor) -> list[dict]:
    """Attention weights of every block for one forward pass in eval mode."""
    was_training = model.training
    model.eval()
    captured: list[dict] = []
    try:
        with torch.no_grad():
            if model.config.paradigm == "direct":
                model(lookback, capture=captured)
            else:
                x, _ = model.normalize(lookback)
                model.next_patches(x, x.new_zeros(x.shape[0], 0, model.config.patch_len), capture=captured)
    finally:
        model.train(was_training)
    return captured


def export_attention_maps(model, lookback, layer: int | str = "last", head: int | str = "all",
                          out_dir: str | Path | None = None, stack: int | None = None,
                          kind: str = "self") -> list[np.ndarray]:
    """Attention matrices for one look-back, optionally written as CSV.

    ``stack`` defaults to the last stack (the forecasting stack of a
    cross-attention model). Files are named ``attn_s{stack}_l{layer}_h{head}_{kind}.csv``.
    """
    lb = torch.as_tensor(np.asarray(lookback), dtype=next(model.parameters()).dtype)
    if lb.dim() == 1:
        lb = lb.unsqueeze(0)
    captured = capture_attention(model, lb[:1])
    stack = len(model.stacks) - 1 if stack is None else stack
    entries = [c for c in captured if c["stack"] == stack and c["kind"] == kind]
    if not entries:
        raise IndexError(f"no {kind}-attention captured for stack {stack}")
    n_layers = len(entries)
    layer_idx = n_layers - 1 if layer == "last" else int(layer)
    if not 0 <= layer_idx < n_layers:
        raise IndexError(f"layer {layer} out of range (0..{n_layers - 1})")
    weights = entries[layer_idx]["weights"][0]  # (H, Pq, Pk)
    n_heads = weights.shape[0]
    heads = range(n_heads) if head == "all" else [int(head)]
    mats = []
    for h in heads:
        if not 0 <= h < n_heads:
            raise IndexError(f"head {h} out of range (0..{n_heads - 1})")
        mat = weights[h].to(torch.float64).numpy()
        mats.append(mat)
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            np.savetxt(out / f"attn_s{stack}_l{layer_idx}_h{h}_{kind}.csv", mat, delimiter=",", fmt="%.17g")
    return mats


def read_matrix_csv(path: str | Path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))
