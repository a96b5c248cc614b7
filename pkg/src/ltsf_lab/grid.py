"""Deterministic experiment grids over the taxonomy axes.

A grid spec is a flat ``key = value`` file. Axis keys take comma-separated
lists; every other key is passed through to the data, model or train config::

    datasets = ETTh1, ETTh2          # files <data_dir>/<name>.csv
    data_dir = data
    architecture = encoder_only, decoder_only
    aggregation = none, complete
    paradigm = direct
    norm = batch
    pred_lens = 96, 192
    seeds = 0, 1, 2
    train_ratios = 1.0
    presets = combined               # optional, added after the axis product
    variable_length = false
    d_model = 32                     # pass-through

Outputs in ``out_dir``: ``results.jsonl`` (one record per dataset, config,
length, seed and train ratio), ``results.md`` (rows = configs, columns =
dataset x metric, averaged over lengths and seeds), ``per_length.csv`` and
``failures.txt``.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from .config import (ConfigError, DataConfig, ModelConfig, TrainConfig, coerce, default_split,
                     from_kv, read_kv, replace)
from .experiment import SYNTHETIC_PREFIX, run_experiment
from .metrics import MetricsReport
from .presets import preset

log = logging.getLogger(__name__)

AXES = ("architecture", "aggregation", "paradigm", "norm")
LIST_KEYS = ("datasets", "presets", "pred_lens", "seeds", "train_ratios", *AXES)


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


@dataclass
class GridSpec:
    datasets: list[str] = field(default_factory=list)
    data_dir: str = "."
    axes: dict[str, list[str]] = field(default_factory=dict)
    presets: list[str] = field(default_factory=list)
    pred_lens: list[int] = field(default_factory=lambda: [96])
    seeds: list[int] = field(default_factory=lambda: [0])
    train_ratios: list[float] = field(default_factory=lambda: [1.0])
    variable_length: bool = False
    model_overrides: dict[str, str] = field(default_factory=dict)
    train_overrides: dict[str, str] = field(default_factory=dict)
    data_overrides: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_kv(cls, values: dict[str, str]) -> "GridSpec":
        spec = cls()
        model_keys = {f.name for f in fields(ModelConfig)}
        train_keys = {f.name for f in fields(TrainConfig)}
        data_keys = {f.name for f in fields(DataConfig)} - {"dataset", "data_path", "train_subset"}
        for key, value in values.items():
            if key == "datasets":
                spec.datasets = _split_list(value)
            elif key == "data_dir":
                spec.data_dir = value
            elif key in AXES:
                spec.axes[key] = _split_list(value)
            elif key == "presets":
                spec.presets = _split_list(value)
            elif key == "pred_lens":
                spec.pred_lens = [int(v) for v in _split_list(value)]
            elif key == "seeds":
                spec.seeds = [int(v) for v in _split_list(value)]
            elif key == "train_ratios":
                spec.train_ratios = [float(v) for v in _split_list(value)]
            elif key == "variable_length":
                spec.variable_length = coerce(value, "bool")
            elif key in model_keys:
                spec.model_overrides[key] = value
            elif key in train_keys:
                if key == "seed":
                    raise ConfigError("use 'seeds' in grid specs")
                spec.train_overrides[key] = value
            elif key in data_keys:
                spec.data_overrides[key] = value
            else:
                raise ConfigError(f"unknown grid key {key!r}")
        return spec

    @classmethod
    def read(cls, path: str | Path) -> "GridSpec":
        return cls.from_kv(read_kv(path))

    def model_configs(self) -> list[ModelConfig]:
        """Axis product then presets, deduplicated; invalid combinations are dropped.

        With neither axes nor presets the pass-through config is the only one.
        """
        base = from_kv(ModelConfig, self.model_overrides)
        out: list[ModelConfig] = []
        if self.axes:
            choices = [self.axes.get(a, [getattr(base, a)]) for a in AXES]
            for combo in itertools.product(*choices):
                try:
                    out.append(replace(base, **dict(zip(AXES, combo))))
                except ConfigError as exc:
                    log.info("skipping %s: %s", "/".join(combo), exc)
        for name in self.presets:
            p = preset(name)
            out.append(replace(base, **{a: getattr(p, a) for a in AXES}))
        if not self.axes and not self.presets:
            out.append(base)
        unique = {c.label() + c.digest(): c for c in out}
        return sorted(unique.values(), key=lambda c: (c.label(), c.digest()))


@dataclass(frozen=True)
class Cell:
    dataset: str
    config: ModelConfig
    seed: int
    train_ratio: float
    lengths: tuple[int, ...]


def enumerate_cells(spec: GridSpec) -> list[Cell]:
    """Training runs in (dataset, config, length, seed, ratio) order.

    With ``variable_length`` one model per cell covers every length;
    otherwise each length trains its own model.
    """
    cells = []
    lens = sorted(spec.pred_lens)
    for dataset in sorted(spec.datasets):
        for cfg in spec.model_configs():
            groups = [tuple(lens)] if spec.variable_length else [(n,) for n in lens]
            for group in groups:
                for seed in sorted(spec.seeds):
                    for ratio in sorted(spec.train_ratios):
                        cells.append(Cell(dataset, replace(cfg, pred_len=max(group)), seed, ratio, group))
    return cells


def _data_config(spec: GridSpec, dataset: str, ratio: float) -> DataConfig:
    if dataset.startswith(SYNTHETIC_PREFIX):
        path = dataset
    else:
        path = str(Path(spec.data_dir) / f"{dataset}.csv")
    values = dict(spec.data_overrides)
    data = from_kv(DataConfig, values)
    split = data.split if "split" in values else default_split(dataset)
    return replace(data, data_path=path, dataset=dataset, split=split, train_subset=ratio)


def run_cell(spec: GridSpec, cell: Cell, timing: bool = False) -> list[MetricsReport]:
    torch.set_num_threads(1)
    data = _data_config(spec, cell.dataset, cell.train_ratio)
    train_cfg = replace(from_kv(TrainConfig, spec.train_overrides), seed=cell.seed)
    return run_experiment(data, cell.config, train_cfg, list(cell.lengths), timing=timing).reports


def _run_safe(args) -> tuple[list[MetricsReport], str | None]:
    spec, cell, timing = args
    try:
        return run_cell(spec, cell, timing), None
    except Exception as exc:  # a failed cell must not take the grid down
        log.debug("cell failed:\n%s", traceback.format_exc())
        return [], f"{cell.dataset}\t{cell.config.label()}\tseed={cell.seed}\tratio={cell.train_ratio}\t" \
                   f"{type(exc).__name__}: {exc}"


def _row_label(r: MetricsReport, ratios: bool) -> str:
    label = f"{r.arch}/{r.aggregation}/{r.paradigm}/{r.norm}"
    return f"{label}@{r.train_ratio:g}" if ratios else label


def markdown_table(records: list[MetricsReport], datasets: list[str], row_labels: list[str],
                   with_ratio: bool = False) -> str:
    head = "| model | " + " | ".join(f"{d} MSE | {d} MAE" for d in datasets) + " |"
    sep = "|---|" + "---|" * (2 * len(datasets))
    lines = [head, sep]
    for label in row_labels:
        cells = []
        for d in datasets:
            rs = [r for r in records if r.dataset == d and _row_label(r, with_ratio) == label]
            if rs:
                cells += [f"{np.mean([r.mse for r in rs]):.3f}", f"{np.mean([r.mae for r in rs]):.3f}"]
            else:
                cells += ["-", "-"]
        lines.append(f"| {label} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def per_length_csv(records: list[MetricsReport], with_ratio: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["dataset", "model", "pred_len", "n_seeds", "mse", "mae"])
    keys = sorted({(r.dataset, _row_label(r, with_ratio), r.pred_len) for r in records})
    for d, label, n in keys:
        rs = [r for r in records if (r.dataset, _row_label(r, with_ratio), r.pred_len) == (d, label, n)]
        writer.writerow([d, label, n, len(rs), f"{np.mean([r.mse for r in rs]):.6f}",
                         f"{np.mean([r.mae for r in rs]):.6f}"])
    return buf.getvalue()


@dataclass
class GridOutcome:
    records: list[MetricsReport]
    failures: list[str]
    n_cells: int

    @property
    def all_failed(self) -> bool:
        return self.n_cells > 0 and not self.records


def run_grid(spec: GridSpec, out_dir: str | Path, jobs: int = 1, timing: bool = False) -> GridOutcome:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = enumerate_cells(spec)
    tasks = [(spec, c, timing) for c in cells]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_safe, tasks))
    else:
        results = [_run_safe(t) for t in tasks]

    records = [r for reps, _ in results for r in reps]
    failures = [f for _, f in results if f]
    records.sort(key=lambda r: (r.dataset, _row_label(r, False), r.pred_len, r.seed, r.train_ratio, r.config_digest))
    with_ratio = len(spec.train_ratios) > 1
    labels = sorted({_row_label(r, with_ratio) for r in records})
    if not labels:
        labels = sorted({c.config.label() for c in cells})

    (out / "results.jsonl").write_text("".join(r.to_json() + "\n" for r in records), encoding="utf-8")
    (out / "results.md").write_text(markdown_table(records, sorted(spec.datasets), labels, with_ratio),
                                    encoding="utf-8")
    (out / "per_length.csv").write_text(per_length_csv(records, with_ratio), encoding="utf-8")
    (out / "failures.txt").write_text("".join(f + "\n" for f in failures), encoding="utf-8")
    return GridOutcome(records, failures, len(cells))
