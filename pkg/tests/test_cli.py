from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from fedpurin.cli import compare_rows, main, sweep_rows
from fedpurin.orchestrator import run
from fedpurin.config import parse_config

FAST = [
    "num_clients=3",
    "rounds=2",
    "local_epochs=1",
    "batch_size=8",
    "partition.train_per_client=12",
    "partition.test_per_client=4",
    "data.num_classes=3",
    "data.feature_dim=6",
    "data.samples_per_class=30",
    "model.hidden=8",
]


def fast_args(*extra: str) -> list[str]:
    out = []
    for kv in [*FAST, *extra]:
        out += ["--set", kv]
    return out


def test_run_writes_artifacts(tmp_path):
    rc = main(["run", *fast_args(), "--seed", "5", "--out", str(tmp_path)])
    assert rc == 0
    run_dir = tmp_path / "fedpurin_seed5"
    for name in ("metrics.csv", "ledger.csv", "summary.json"):
        assert (run_dir / name).is_file()
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["method"] == "fedpurin"
    assert summary["seed"] == 5
    assert 0.0 <= summary["best_mean_accuracy"] <= 1.0

    metrics_lines = (run_dir / "metrics.csv").read_text().strip().splitlines()
    assert metrics_lines[0] == "round,client_id,test_acc,train_loss"
    assert len(metrics_lines) == 1 + 2 * 3  # rounds * clients
    ledger_lines = (run_dir / "ledger.csv").read_text().strip().splitlines()
    assert ledger_lines[0] == "round,client_id,uplink_bytes,downlink_bytes,uplink_nnz,downlink_nnz"
    assert len(ledger_lines) == 1 + 2 * 3


def test_run_config_error_exit_code(tmp_path, capsys):
    rc = main(["run", "--set", "score.tau=1.5", "--seed", "1", "--out", str(tmp_path)])
    assert rc == 1
    assert "tau out of (0,1]" in capsys.readouterr().err


def test_run_unknown_key_exit_code(tmp_path):
    rc = main(["run", "--set", "nope=1", "--seed", "1", "--out", str(tmp_path)])
    assert rc == 1


def test_run_failure_exit_code(tmp_path):
    # valid config, but the partition cannot be satisfied -> run failure
    rc = main(
        [
            "run",
            *fast_args("partition.train_per_client=10000"),
            "--seed",
            "1",
            "--out",
            str(tmp_path),
        ]
    )
    assert rc == 2


def test_config_file_plus_override(tmp_path):
    cfg_file = tmp_path / "cfg.txt"
    cfg_file.write_text("\n".join(FAST) + "\nmethod=separate\n")
    rc = main(
        [
            "run",
            "--config",
            str(cfg_file),
            "--set",
            "method=fedavg",
            "--seed",
            "2",
            "--out",
            str(tmp_path),
        ]
    )
    assert rc == 0
    assert (tmp_path / "fedavg_seed2").is_dir()


def test_sweep_writes_per_seed_dirs_and_summary(tmp_path):
    rc = main(["sweep", *fast_args(), "--seeds", "1,2,3", "--out", str(tmp_path)])
    assert rc == 0
    for seed in (1, 2, 3):
        assert (tmp_path / f"fedpurin_seed{seed}" / "summary.json").is_file()
    summary = (tmp_path / "sweep_summary.csv").read_text().splitlines()
    assert summary[0].startswith("method,runs,best_acc_mean,best_acc_std")
    assert summary[1].startswith("fedpurin,3,")


def test_sweep_single_seed_reports_zero_std():
    cfg = parse_config(None, FAST)
    result = run(cfg)
    stats = sweep_rows([result])
    assert stats["best_acc_std"] == 0.0
    assert stats["runs"] == 1


def test_sweep_stats_match_hand_computation():
    cfgs = [parse_config(None, [*FAST, f"seed={s}"]) for s in (1, 2, 3)]
    results = [run(c) for c in cfgs]
    stats = sweep_rows(results)
    best = [r.best_mean_accuracy for r in results]
    assert stats["best_acc_mean"] == pytest.approx(float(np.mean(best)), abs=0.0)
    assert stats["best_acc_std"] == pytest.approx(float(np.std(best, ddof=1)), abs=0.0)


def test_sweep_summary_recomputable_from_run_csvs(tmp_path):
    rc = main(["sweep", *fast_args(), "--seeds", "4,5", "--out", str(tmp_path)])
    assert rc == 0
    bests, ups, downs = [], [], []
    for seed in (4, 5):
        run_dir = tmp_path / f"fedpurin_seed{seed}"
        rows = [
            line.split(",")
            for line in (run_dir / "metrics.csv").read_text().strip().splitlines()[1:]
        ]
        per_round: dict[int, list[float]] = {}
        for rnd, _, acc, _ in rows:
            per_round.setdefault(int(rnd), []).append(float(acc))
        bests.append(max(float(np.mean(v)) for v in per_round.values()))
        ledger = [
            line.split(",")
            for line in (run_dir / "ledger.csv").read_text().strip().splitlines()[1:]
        ]
        cells = len(ledger)
        ups.append(sum(int(r[2]) for r in ledger) / cells)
        downs.append(sum(int(r[3]) for r in ledger) / cells)
    summary = (tmp_path / "sweep_summary.csv").read_text().splitlines()
    fields = dict(zip(summary[0].split(","), summary[1].split(",")))
    assert float(fields["best_acc_mean"]) == float(np.mean(bests))
    assert float(fields["best_acc_std"]) == float(np.std(bests, ddof=1))
    assert float(fields["uplink_bytes_per_round_mean"]) == float(np.mean(ups))
    assert float(fields["downlink_bytes_per_round_mean"]) == float(np.mean(downs))


def test_sweep_identical_seeds_identical_outputs(tmp_path):
    rc = main(["sweep", *fast_args(), "--seeds", "7,7", "--out", str(tmp_path)])
    assert rc == 0
    # same (config, seed) twice: the second run overwrote the first with
    # byte-identical content, and the sweep std over equal values is 0
    summary = (tmp_path / "sweep_summary.csv").read_text()
    fields = summary.splitlines()[1].split(",")
    assert float(fields[3]) == 0.0  # best_acc_std


def test_compare_self_zero_reduction(tmp_path):
    main(["run", *fast_args("method=fedavg"), "--seed", "1", "--out", str(tmp_path)])
    rows = compare_rows([tmp_path / "fedavg_seed1", tmp_path / "fedavg_seed1"])
    assert len(rows) == 1
    assert rows[0]["uplink_reduction_pct"] == 0.0
    assert rows[0]["downlink_reduction_pct"] == 0.0


def test_compare_separate_is_full_reduction(tmp_path):
    main(["run", *fast_args("method=fedavg"), "--seed", "1", "--out", str(tmp_path)])
    main(["run", *fast_args("method=separate"), "--seed", "1", "--out", str(tmp_path)])
    rows = compare_rows([tmp_path / "fedavg_seed1", tmp_path / "separate_seed1"])
    by_method = {r["method"]: r for r in rows}
    assert by_method["separate"]["uplink_reduction_pct"] == 100.0
    assert by_method["separate"]["downlink_reduction_pct"] == 100.0


def test_compare_missing_summary_is_named_error(tmp_path, capsys):
    rc = main(["compare", str(tmp_path / "absent")])
    assert rc == 2
    assert "missing summary" in capsys.readouterr().err


def test_compare_cli_table_and_csv(tmp_path, capsys):
    main(["run", *fast_args("method=fedavg"), "--seed", "1", "--out", str(tmp_path)])
    main(["run", *fast_args(), "--seed", "1", "--out", str(tmp_path)])
    csv_path = tmp_path / "compare.csv"
    rc = main(
        [
            "compare",
            str(tmp_path / "fedavg_seed1"),
            str(tmp_path / "fedpurin_seed1"),
            "--csv",
            str(csv_path),
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "fedpurin" in out and "fedavg" in out
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("method,runs,best_acc_mean")
    assert len(lines) == 3


def test_console_entry_point_runs(tmp_path):
    proc = subprocess.run(
        [
            sys.executable,
            "-m",
            "fedpurin.cli",
            "run",
            *fast_args(),
            "--seed",
            "3",
            "--out",
            str(tmp_path),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "fedpurin_seed3" / "summary.json").is_file()
