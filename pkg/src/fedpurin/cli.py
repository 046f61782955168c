"""Command-line entry point: run / sweep / compare.

    fedpurin run --config cfg.txt --seed 1 --out results/
    fedpurin sweep --config cfg.txt --seeds 1,2,3 --out results/
    fedpurin compare results/fedpurin_seed1 results/fedavg_seed1

Exit codes: 0 success, 1 configuration error, 2 run failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, parse_config
from .orchestrator import run, RunResult, write_run_artifacts

MB = float(1 << 20)  # ledger tables report binary megabytes


def run_dir_name(cfg: RunConfig) -> str:
    return f"{cfg.method}_seed{cfg.seed}"


def _execute_run(cfg: RunConfig, out_root: Path) -> tuple[RunResult, Path]:
    result = run(cfg)
    out_dir = write_run_artifacts(out_root / run_dir_name(cfg), result)
    return result, out_dir


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config, args.set)
    cfg = replace(cfg, seed=args.seed)
    try:
        result, out_dir = _execute_run(cfg, Path(args.out))
    except Exception as exc:  # run-phase failure, config already validated
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    print(
        f"{run_dir_name(cfg)}: best mean accuracy {result.best_mean_accuracy:.4f} "
        f"(round {result.best_round}), artifacts in {out_dir}"
    )
    return 0


def _sample_std(values: list[float]) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(np.asarray(values, dtype=np.float64), ddof=1))


def sweep_rows(results: list[RunResult]) -> dict[str, float]:
    best = [r.best_mean_accuracy for r in results]
    cells = [r.config.rounds * r.config.num_clients for r in results]
    up = [r.total_bytes()[0] / c for r, c in zip(results, cells)]
    down = [r.total_bytes()[1] / c for r, c in zip(results, cells)]
    return {
        "runs": len(results),
        "best_acc_mean": float(np.mean(best)),
        "best_acc_std": _sample_std(best),
        "uplink_bytes_per_round_mean": float(np.mean(up)),
        "uplink_bytes_per_round_std": _sample_std(up),
        "downlink_bytes_per_round_mean": float(np.mean(down)),
        "downlink_bytes_per_round_std": _sample_std(down),
    }


def _cmd_sweep(args: argparse.Namespace) -> int:
    base = parse_config(args.config, args.set)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds must be a comma-separated integer list: {args.seeds!r}")
    if not seeds:
        raise ConfigError("--seeds needs at least one seed")

    out_root = Path(args.out)
    results: list[RunResult] = []
    failures: list[tuple[int, str]] = []
    for seed in seeds:
        cfg = replace(base, seed=seed)
        try:
            result, out_dir = _execute_run(cfg, out_root)
        except Exception as exc:
            failures.append((seed, str(exc)))
            print(f"seed {seed} failed: {exc}", file=sys.stderr)
            continue
        results.append(result)
        print(f"seed {seed}: best mean accuracy {result.best_mean_accuracy:.4f} -> {out_dir}")

    if results:
        stats = sweep_rows(results)
        out_root.mkdir(parents=True, exist_ok=True)
        header = ",".join(["method", *stats.keys()])
        line = ",".join([base.method, *(repr(v) if isinstance(v, float) else str(v) for v in stats.values())])
        (out_root / "sweep_summary.csv").write_text(header + "\n" + line + "\n")
        print(
            f"{base.method}: best acc {stats['best_acc_mean']:.4f} "
            f"+/- {stats['best_acc_std']:.4f} over {stats['runs']} seed(s); "
            f"uplink {stats['uplink_bytes_per_round_mean'] / MB:.4f} MB/round/client"
        )
    if failures:
        print(f"{len(failures)} run(s) failed", file=sys.stderr)
        return 2
    return 0


def load_summary(run_dir: str | Path) -> dict:
    path = Path(run_dir) / "summary.json"
    if not path.is_file():
        raise FileNotFoundError(f"missing summary: {path}")
    with open(path) as fh:
        return json.load(fh)


def compare_rows(run_dirs: list[str | Path]) -> list[dict]:
    """One row per method: accuracy plus per-client per-round traffic.

    The reduction columns are relative to the fedavg rows when present,
    otherwise to the method of the first directory given (so comparing a
    run against itself reports 0%).
    """
    summaries = [load_summary(d) for d in run_dirs]
    by_method: dict[str, list[dict]] = {}
    order: list[str] = []
    for summary in summaries:
        method = summary["method"]
        if method not in order:
            order.append(method)
        by_method.setdefault(method, []).append(summary)

    rows = []
    for method in order:
        group = by_method[method]
        rows.append(
            {
                "method": method,
                "runs": len(group),
                "best_acc_mean": float(np.mean([s["best_mean_accuracy"] for s in group])),
                "uplink_mb_per_round": float(
                    np.mean([s["uplink_bytes_per_round_per_client"] for s in group]) / MB
                ),
                "downlink_mb_per_round": float(
                    np.mean([s["downlink_bytes_per_round_per_client"] for s in group]) / MB
                ),
            }
        )

    baseline_method = "fedavg" if "fedavg" in by_method else order[0]
    baseline = next(r for r in rows if r["method"] == baseline_method)
    for row in rows:
        for direction in ("uplink", "downlink"):
            ref = baseline[f"{direction}_mb_per_round"]
            cur = row[f"{direction}_mb_per_round"]
            row[f"{direction}_reduction_pct"] = 100.0 * (1.0 - cur / ref) if ref > 0 else 0.0
    return rows


def format_compare_table(rows: list[dict]) -> str:
    header = (
        f"{'method':<10} {'best_acc':>9} {'up MB/rnd':>10} {'down MB/rnd':>12} "
        f"{'up red%':>8} {'down red%':>10}"
    )
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r['method']:<10} {r['best_acc_mean']:>9.4f} {r['uplink_mb_per_round']:>10.4f} "
            f"{r['downlink_mb_per_round']:>12.4f} {r['uplink_reduction_pct']:>8.1f} "
            f"{r['downlink_reduction_pct']:>10.1f}"
        )
    return "\n".join(lines)


def compare_csv_lines(rows: list[dict]) -> list[str]:
    cols = [
        "method",
        "runs",
        "best_acc_mean",
        "uplink_mb_per_round",
        "downlink_mb_per_round",
        "uplink_reduction_pct",
        "downlink_reduction_pct",
    ]
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols))
    return lines


def _cmd_compare(args: argparse.Namespace) -> int:
    try:
        rows = compare_rows(args.run_dirs)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    print(format_compare_table(rows))
    if args.csv:
        Path(args.csv).write_text("\n".join(compare_csv_lines(rows)) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedpurin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one (config, seed) run")
    p_run.add_argument("--config", default=None, help="key=value config file")
    p_run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p_run.add_argument("--seed", type=int, required=True)
    p_run.add_argument("--out", required=True, help="output root directory")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run one config over several seeds")
    p_sweep.add_argument("--config", default=None)
    p_sweep.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p_sweep.add_argument("--seeds", required=True, help="comma-separated seed list")
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cmp = sub.add_parser("compare", help="tabulate finished runs")
    p_cmp.add_argument("run_dirs", nargs="+", metavar="DIR")
    p_cmp.add_argument("--csv", default=None, help="also write the table as CSV")
    p_cmp.set_defaults(func=_cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
