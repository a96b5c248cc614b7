"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import AnomalySpec, anomaly_sample_ratio, export_attention_maps
from .config import ConfigError, DataConfig, TrainConfig, from_kv, load_run_config, read_kv, replace
from .experiment import load_dataset, prepare_data, run_experiment
from .grid import GridSpec, run_grid
from .model import load_checkpoint
from .series import DataError, SplitSpec, load_csv
from .training import TrainingDivergedError, evaluate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _lengths(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def cmd_ingest(args) -> int:
    frame = load_csv(args.csv)
    split = SplitSpec(*(0.6, 0.2, 0.2) if frame.name.upper().startswith("ETT") else (0.7, 0.1, 0.2))
    print(f"name = {frame.name}")
    print(f"n_steps = {frame.n_steps}")
    print(f"n_channels = {frame.n_channels}")
    print(f"columns = {','.join(frame.columns)}")
    print(f"first = {frame.timestamps[0]}")
    print(f"last = {frame.timestamps[-1]}")
    print(f"split_sizes = {','.join(map(str, split.sizes(frame.n_steps)))}")
    return EXIT_OK


def cmd_analyze_anomaly(args) -> int:
    frame = load_csv(args.csv)
    spec = AnomalySpec(sample_len=args.sample_len, outlier_fraction_threshold=args.threshold, iqr_k=args.iqr_k)
    print(f"{anomaly_sample_ratio(frame, spec):.6f}")
    return EXIT_OK


def cmd_train(args) -> int:
    values = read_kv(args.config)
    data_cfg, model_cfg, train_cfg = load_run_config(values)
    if args.seed is not None:
        train_cfg = replace(train_cfg, seed=args.seed)
    lengths = args.lengths or [model_cfg.pred_len]
    out = run_experiment(data_cfg, model_cfg, train_cfg, lengths, checkpoint_dir=args.out, timing=args.timing)
    for r in out.reports:
        print(r.to_json())
    return EXIT_OK


def cmd_eval(args) -> int:
    model, values = load_checkpoint(args.checkpoint)
    data_cfg = from_kv(DataConfig, values)
    seed = args.seed if args.seed is not None else from_kv(TrainConfig, values).seed
    lengths = args.lengths or [model.config.pred_len]
    frame = load_dataset(data_cfg)
    data = prepare_data(frame, data_cfg, model.config, test_horizon=max(max(lengths), model.config.pred_len))
    for r in evaluate(model, data.test.lookback, data.test.target, lengths,
                      dataset=data_cfg.dataset or frame.name, seed=seed, train_ratio=data_cfg.train_subset):
        print(r.to_json())
    return EXIT_OK


def cmd_grid(args) -> int:
    spec = GridSpec.read(args.spec)
    if args.seed is not None:
        spec.seeds = [args.seed]
    outcome = run_grid(spec, args.out, jobs=args.jobs, timing=args.timing)
    print(f"{len(outcome.records)} records from {outcome.n_cells} cells, {len(outcome.failures)} failed")
    for f in outcome.failures:
        print(f"FAILED {f}", file=sys.stderr)
    return EXIT_TRAIN if outcome.all_failed else EXIT_OK


def cmd_dump_attention(args) -> int:
    model, values = load_checkpoint(args.checkpoint)
    data_cfg = from_kv(DataConfig, values)
    data = prepare_data(load_dataset(data_cfg), data_cfg, model.config)
    if not 0 <= args.window < len(data.test):
        raise DataError(f"window {args.window} out of range (0..{len(data.test) - 1})")
    out = Path(args.out or Path(args.checkpoint) / "attention")
    mats = export_attention_maps(model, data.test.lookback[args.window], layer=args.layer, head=args.head,
                                 out_dir=out, stack=args.stack, kind=args.kind)
    print(json.dumps({"out": str(out), "heads": len(mats), "shape": list(np.shape(mats[0]))}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ltsf-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="load a CSV and print its shape and split sizes")
    p.add_argument("csv")
    p.add_argument("--seed", type=int, default=None, help="accepted for uniformity; unused")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("analyze-anomaly", help="IQR anomaly-sample ratio of a CSV")
    p.add_argument("csv")
    p.add_argument("--sample-len", type=int, default=512)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--iqr-k", type=float, default=1.5)
    p.add_argument("--seed", type=int, default=None, help="accepted for uniformity; unused")
    p.set_defaults(fn=cmd_analyze_anomaly)

    p = sub.add_parser("train", help="train one config and write a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="checkpoint directory")
    p.add_argument("--lengths", type=_lengths, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--timing", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint at several forecast lengths")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lengths", type=_lengths, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("grid", help="run a grid spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="replace the grid's seed list with one seed")
    p.add_argument("--timing", action="store_true", help="record wall time (outputs stop being byte-reproducible)")
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("dump-attention", help="write attention maps of one test window as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--layer", default="last")
    p.add_argument("--head", default="all")
    p.add_argument("--stack", type=int, default=None)
    p.add_argument("--kind", choices=("self", "cross"), default="self")
    p.add_argument("--window", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None, help="accepted for uniformity; unused")
    p.set_defaults(fn=cmd_dump_attention)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
