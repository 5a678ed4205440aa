#!/usr/bin/env python3
"""Run every registered experiment with its defaults and collect pass/fail."""
import argparse
import json
import sys
import time
from pathlib import Path

from aggdiff.config import ExperimentConfig
from aggdiff.experiments import list_experiments, run_experiment


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs", help="output root directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--only", default=None, help="comma-separated experiment names")
    args = ap.parse_args()

    names = list(list_experiments())
    if args.only:
        names = [n for n in names if n in set(args.only.split(","))]
    root = Path(args.out)
    all_ok = True
    for name in names:
        cfg = ExperimentConfig({"experiment": name, "seed": args.seed})
        t0 = time.perf_counter()
        summary = run_experiment(cfg, out_dir=root / name)
        wall = time.perf_counter() - t0
        all_ok &= summary["pass"]
        print(f"{name:32s} {'PASS' if summary['pass'] else 'FAIL'}  ({wall:7.1f}s)")
    (root / "index.json").write_text(json.dumps({"experiments": names}, indent=2))
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
