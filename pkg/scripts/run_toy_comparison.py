#!/usr/bin/env python3
"""Desk-scale method comparison: accuracy and traffic for all five methods.

Runs separate / fedavg / fedper / fedcac / fedpurin over a seed list on the
synthetic non-IID benchmark, writes per-run artifacts under --out, and prints
the accuracy/traffic comparison table (reductions relative to fedavg).

Example:
    python scripts/run_toy_comparison.py --out results/toy --seeds 1,2,3
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from fedpurin.cli import compare_rows, compare_csv_lines, format_compare_table, run_dir_name
from fedpurin.config import parse_config
from fedpurin.orchestrator import run, write_run_artifacts

METHODS = ("separate", "fedavg", "fedper", "fedcac", "fedpurin")

TOY_OVERRIDES = [
    "num_clients=8",
    "rounds=30",
    "local_epochs=5",
    "batch_size=10",
    "partition.alpha=0.1",
    "partition.train_per_client=50",
    "partition.test_per_client=10",
    "data.num_classes=10",
    "data.feature_dim=16",
    "data.samples_per_class=200",
    "model.hidden=32",
]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output root directory")
    parser.add_argument("--seeds", default="1,2,3", help="comma-separated seeds")
    parser.add_argument("--rounds", type=int, default=None, help="override round count")
    args = parser.parse_args(argv)

    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    overrides = list(TOY_OVERRIDES)
    if args.rounds is not None:
        overrides.append(f"rounds={args.rounds}")

    out_root = Path(args.out)
    run_dirs: list[Path] = []
    for method in METHODS:
        base = parse_config(None, [*overrides, f"method={method}"])
        for seed in seeds:
            cfg = replace(base, seed=seed)
            result = run(cfg)
            run_dirs.append(write_run_artifacts(out_root / run_dir_name(cfg), result))
            print(
                f"{run_dir_name(cfg)}: best mean accuracy "
                f"{result.best_mean_accuracy:.4f} (round {result.best_round})"
            )

    rows = compare_rows(run_dirs)
    print()
    print(format_compare_table(rows))
    (out_root / "compare.csv").write_text("\n".join(compare_csv_lines(rows)) + "\n")
    print(f"\ntable written to {out_root / 'compare.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
