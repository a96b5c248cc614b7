"""Desk-scale directional checks of the architecture comparisons.

Runs each group of presets over several seeds and prints the per-seed and
mean test MSE at pred_len 96. A dataset whose CSV is missing from
``--data-dir`` is replaced by the ETT-like synthetic series and marked as
such in the output, so the ordering it shows says nothing about real data.

    python scripts/desk_comparisons.py --data-dir data --groups paradigm,aggregation
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np
import torch

from ltsf_lab.config import DataConfig, TrainConfig
from ltsf_lab.experiment import run_experiment
from ltsf_lab.presets import DESK_DATA, DESK_TRAIN, desk
from ltsf_lab.synthetic import ett_like

GROUPS = {
    # dataset, presets in expected best-to-worst order
    "paradigm": ("ETTh2", ["decoder-direct", "decoder-autoregressive"]),
    "aggregation": ("ETTh1", ["complete-aggregation", "partial-aggregation", "no-aggregation"]),
    "attention": ("ETTh1", ["encoder-only", "prefix-decoder", "decoder-only"]),
    "norm": ("ETTh1", ["encoder-only-bn", "encoder-only-ln"]),
}


def run_group(name: str, data_dir: Path, seeds: list[int], epochs: int | None) -> dict:
    dataset, presets = GROUPS[name]
    path = data_dir / f"{dataset}.csv"
    frame = None
    source = str(path)
    if not path.exists():
        frame = ett_like(seed=0, name=f"{dataset}-synthetic")
        source = "synthetic stand-in"
    data = DataConfig(data_path=str(path), dataset=dataset, split=(0.6, 0.2, 0.2), **DESK_DATA)
    train = dict(DESK_TRAIN, **({"max_epochs": epochs} if epochs else {}))
    scores: dict[str, list[float]] = {}
    for p in presets:
        for seed in seeds:
            out = run_experiment(data, desk(p, dataset), TrainConfig(seed=seed, **train), frame=frame)
            scores.setdefault(p, []).append(out.reports[0].mse)
    means = [float(np.mean(scores[p])) for p in presets]
    return {"group": name, "dataset": dataset, "source": source, "scores": scores,
            "means": dict(zip(presets, means)),
            "ordering_holds": all(a <= b for a, b in zip(means, means[1:]))}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir", default="data")
    ap.add_argument("--groups", default="paradigm,aggregation")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--epochs", type=int, default=None, help="override the desk epoch budget")
    ap.add_argument("--json", action="store_true", help="print one JSON object per group")
    args = ap.parse_args()
    torch.set_num_threads(1)
    seeds = [int(s) for s in args.seeds.split(",")]
    for name in args.groups.split(","):
        start = time.perf_counter()
        res = run_group(name, Path(args.data_dir), seeds, args.epochs)
        if args.json:
            print(json.dumps(res), flush=True)
            continue
        print(f"== {name} on {res['dataset']} ({res['source']}), {time.perf_counter() - start:.0f}s")
        for p, vals in res["scores"].items():
            print(f"  {p:28s} mean {res['means'][p]:.4f}  seeds " + " ".join(f"{v:.4f}" for v in vals))
        print(f"  expected ordering holds: {res['ordering_holds']}", flush=True)


if __name__ == "__main__":
    main()
