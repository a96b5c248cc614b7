"""Write the built-in synthetic series as CSV files in the ETT column layout."""

from __future__ import annotations

import argparse
from pathlib import Path

from ltsf_lab.series import write_csv
from ltsf_lab.synthetic import GENERATORS, generate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/synthetic")
    ap.add_argument("--names", default=",".join(sorted(GENERATORS)))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.names.split(","):
        kwargs = {"seed": args.seed}
        frame = generate(name, **kwargs)
        path = out / f"{name}.csv"
        write_csv(frame, path)
        print(f"{path}: {frame.n_steps} steps x {frame.n_channels} channels")


if __name__ == "__main__":
    main()
