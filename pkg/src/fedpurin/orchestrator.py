"""End-to-end round loop for the sparse-collaboration protocol and baselines.

One round, uniformly for every method: each client trains locally for E
epochs, its test accuracy is measured on the freshly trained model (before
any aggregation, so the reported number is the personalized one), and the
method-specific exchange then replaces client parameters for the next round.

Methods
  fedpurin  clients upload masked parameters plus the mask; the server builds
            per-client grouped means over high-overlap partners, a sparse
            global mean, and sends back the per-position combination.
  fedcac    clients upload full models plus the mask; critical positions are
            group-averaged, the rest come from a dense global mean. After
            round beta, critical collaboration halts and the downlink carries
            only non-critical positions.
  fedavg    dense mean of all clients each round.
  fedper    dense mean of everything except the final dense layer.
  separate  no communication at all.

The ledger charges 4 bytes per transmitted value (float32 wire format) and
1 bit per element for masks, counting parameter payloads only.

Clients within a round are pure functions of (round inputs, derived seed);
the loop runs them sequentially, and all server means are ascending-id left
folds, so results never depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import json

import numpy as np

from .config import RunConfig, config_items
from .data import (
    Dataset,
    dirichlet_partition,
    generate_synthetic,
    load_csv,
    load_idx,
    PartitionReport,
    subset,
)
from .errors import ConfigError
from .nn import LayerSpec, Mlp, GradientSnapshot, local_train
from .rng import derive_seed, STREAM_DATA, STREAM_INIT, STREAM_PARTITION, STREAM_TRAIN
from .saliency import build_mask, score
from .server import (
    ClientUpdate,
    CollabPlan,
    combine,
    empty_plan,
    fold_mean,
    global_model,
    grouped_model,
    overlap_matrix,
    plan_collaboration,
    schedule_threshold,
)

BYTES_PER_VALUE = 4  # float32 on the wire; training itself is float64

ScoreHook = Callable[[int, int, np.ndarray], np.ndarray]


@dataclass(eq=False)
class ClientState:
    params: np.ndarray
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    last_mask: np.ndarray | None = None
    last_snapshot: GradientSnapshot | None = None


@dataclass(frozen=True)
class MetricsRow:
    round: int
    per_client_accuracy: tuple[float, ...]
    mean_accuracy: float
    mean_train_loss: float


@dataclass(frozen=True)
class LedgerRow:
    round: int
    client_id: int
    uplink_bytes: int
    downlink_bytes: int
    uplink_nnz: int
    downlink_nnz: int


@dataclass(eq=False)
class RunResult:
    config: RunConfig
    metrics: list[MetricsRow]
    ledger: list[LedgerRow]
    final_params: list[np.ndarray]
    plans: list[CollabPlan | None]
    best_mean_accuracy: float
    best_round: int
    partition_report: PartitionReport
    num_params: int

    def total_bytes(self) -> tuple[int, int]:
        up = sum(row.uplink_bytes for row in self.ledger)
        down = sum(row.downlink_bytes for row in self.ledger)
        return up, down


def mask_bytes(num_params: int) -> int:
    """1 bit per element, rounded up to whole bytes."""
    return (num_params + 7) // 8


def account_uplink(update: ClientUpdate, method: str, classifier_len: int = 0) -> int:
    """Bytes one client sends to the server in one round."""
    d = update.sparse_params.size
    if method == "fedpurin":
        return BYTES_PER_VALUE * int(np.count_nonzero(update.sparse_params)) + mask_bytes(d)
    if method == "fedcac":
        return BYTES_PER_VALUE * d + mask_bytes(d)
    if method == "fedavg":
        return BYTES_PER_VALUE * d
    if method == "fedper":
        return BYTES_PER_VALUE * (d - classifier_len)
    if method == "separate":
        return 0
    raise ConfigError(f"unknown method: {method}")


def account_downlink(
    combined: np.ndarray,
    method: str,
    round_t: int,
    beta: int,
    *,
    critical_count: int = 0,
    classifier_len: int = 0,
) -> int:
    """Bytes the server sends one client in one round."""
    d = combined.size
    if method == "fedpurin":
        return BYTES_PER_VALUE * int(np.count_nonzero(combined))
    if method == "fedcac":
        if round_t <= beta:
            return BYTES_PER_VALUE * d
        return BYTES_PER_VALUE * (d - critical_count)
    if method == "fedavg":
        return BYTES_PER_VALUE * d
    if method == "fedper":
        return BYTES_PER_VALUE * (d - classifier_len)
    if method == "separate":
        return 0
    raise ConfigError(f"unknown method: {method}")


def build_layers(
    feature_dim: int, hidden_dims: tuple[int, ...], num_classes: int
) -> list[LayerSpec]:
    dims = [feature_dim, *hidden_dims]
    layers = [
        LayerSpec(dims[i], dims[i + 1], "relu") for i in range(len(dims) - 1)
    ]
    layers.append(LayerSpec(dims[-1], num_classes, "identity"))
    return layers


def load_dataset(cfg: RunConfig) -> Dataset:
    if cfg.data.source == "synthetic":
        return generate_synthetic(
            num_classes=cfg.data.num_classes,
            feature_dim=cfg.data.feature_dim,
            samples_per_class=cfg.data.samples_per_class,
            seed=derive_seed(cfg.seed, STREAM_DATA),
            separation=cfg.data.separation,
        )
    if cfg.data.source == "idx":
        return load_idx(cfg.data.images_path, cfg.data.labels_path)
    return load_csv(cfg.data.csv_path)


def evaluate_accuracy(model: Mlp, params: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    _, logits = model.forward(params, x, y)
    return float(np.mean(np.argmax(logits, axis=1) == y))


def _add_context(exc: Exception, where: str) -> Exception:
    """Prefix a failure with its round/client location, once."""
    if getattr(exc, "_run_context", False):
        return exc
    try:
        wrapped = type(exc)(f"{where}: {exc}")
    except Exception:
        wrapped = RuntimeError(f"{where}: {exc}")
    wrapped._run_context = True
    return wrapped


def run(cfg: RunConfig, *, score_hook: ScoreHook | None = None) -> RunResult:
    """Execute the configured method for cfg.rounds rounds.

    ``score_hook(round, client_id, scores) -> scores`` is a test hook applied
    to saliency scores before mask construction; it never ships in configs.
    """
    ds = load_dataset(cfg)
    pspec = cfg.partition
    if pspec.seed is None:
        pspec = replace(pspec, seed=derive_seed(cfg.seed, STREAM_PARTITION))
    splits, partition_report = dirichlet_partition(ds, pspec)

    model = Mlp(build_layers(ds.feature_dim, cfg.hidden_dims, ds.num_classes))
    d = model.num_params
    classifier_len = model.layout[-1].length
    init = model.init_params(derive_seed(cfg.seed, STREAM_INIT))

    clients: list[ClientState] = []
    for split in splits:
        train = subset(ds, split.train_indices)
        test = subset(ds, split.test_indices)
        clients.append(
            ClientState(
                params=init.copy(),
                train_x=train.features,
                train_y=train.labels,
                test_x=test.features,
                test_y=test.labels,
            )
        )

    n = cfg.num_clients
    metrics: list[MetricsRow] = []
    ledger: list[LedgerRow] = []
    plans: list[CollabPlan | None] = []
    best_mean = 0.0
    best_round = 0

    for round_t in range(1, cfg.rounds + 1):
        accs: list[float] = []
        losses: list[float] = []
        for i, client in enumerate(clients):
            try:
                result = local_train(
                    model,
                    client.params,
                    client.train_x,
                    client.train_y,
                    epochs=cfg.local_epochs,
                    lr=cfg.lr,
                    batch_size=cfg.batch_size,
                    seed=derive_seed(cfg.seed, STREAM_TRAIN, round_t, i),
                )
                client.params = result.params
                client.last_snapshot = result.snapshot
                accs.append(
                    evaluate_accuracy(model, client.params, client.test_x, client.test_y)
                )
            except Exception as exc:
                raise _add_context(exc, f"round {round_t}, client {i}") from exc
            losses.append(result.train_loss)

        try:
            if cfg.method == "separate":
                plans.append(None)
                for i in range(n):
                    ledger.append(LedgerRow(round_t, i, 0, 0, 0, 0))
            elif cfg.method == "fedavg":
                plans.append(None)
                mean = fold_mean([c.params for c in clients])
                for i, client in enumerate(clients):
                    client.params = mean.copy()
                    nbytes = BYTES_PER_VALUE * d
                    ledger.append(LedgerRow(round_t, i, nbytes, nbytes, d, d))
            elif cfg.method == "fedper":
                plans.append(None)
                shared_len = d - classifier_len
                mean_shared = fold_mean([c.params[:shared_len] for c in clients])
                for i, client in enumerate(clients):
                    merged = client.params.copy()
                    merged[:shared_len] = mean_shared
                    client.params = merged
                    nbytes = BYTES_PER_VALUE * shared_len
                    ledger.append(
                        LedgerRow(round_t, i, nbytes, nbytes, shared_len, shared_len)
                    )
            elif cfg.method == "fedpurin":
                plans.append(
                    _fedpurin_round(cfg, model, clients, round_t, ledger, score_hook)
                )
            elif cfg.method == "fedcac":
                plans.append(
                    _fedcac_round(cfg, model, clients, round_t, ledger, score_hook)
                )
            else:
                raise ConfigError(f"unknown method: {cfg.method}")
        except Exception as exc:
            raise _add_context(exc, f"round {round_t} aggregation") from exc

        mean_acc = float(np.mean(accs))
        metrics.append(
            MetricsRow(
                round=round_t,
                per_client_accuracy=tuple(accs),
                mean_accuracy=mean_acc,
                mean_train_loss=float(np.mean(losses)),
            )
        )
        if mean_acc > best_mean or best_round == 0:
            best_mean = mean_acc
            best_round = round_t

    return RunResult(
        config=cfg,
        metrics=metrics,
        ledger=ledger,
        final_params=[c.params for c in clients],
        plans=plans,
        best_mean_accuracy=best_mean,
        best_round=best_round,
        partition_report=partition_report,
        num_params=d,
    )


def _client_masks(
    cfg: RunConfig,
    model: Mlp,
    clients: list[ClientState],
    round_t: int,
    score_hook: ScoreHook | None,
) -> list[np.ndarray]:
    masks: list[np.ndarray] = []
    for i, client in enumerate(clients):
        try:
            scores = score(client.params, client.last_snapshot, cfg.score)
            if score_hook is not None:
                scores = score_hook(round_t, i, scores)
            mask = build_mask(scores, cfg.score, model.layout)
        except Exception as exc:
            raise _add_context(exc, f"round {round_t}, client {i}") from exc
        client.last_mask = mask
        masks.append(mask)
    return masks


def _plan_round(cfg: RunConfig, masks: list[np.ndarray], round_t: int) -> CollabPlan:
    if cfg.num_clients == 1:
        return empty_plan(1)
    o = overlap_matrix(masks)
    threshold = (
        cfg.force_threshold
        if cfg.force_threshold is not None
        else schedule_threshold(round_t, o, cfg.beta)
    )
    return plan_collaboration(o, threshold)


def _fedpurin_round(
    cfg: RunConfig,
    model: Mlp,
    clients: list[ClientState],
    round_t: int,
    ledger: list[LedgerRow],
    score_hook: ScoreHook | None,
) -> CollabPlan:
    masks = _client_masks(cfg, model, clients, round_t, score_hook)
    updates = [
        ClientUpdate(i, np.where(masks[i], clients[i].params, 0.0), masks[i])
        for i in range(cfg.num_clients)
    ]
    plan = _plan_round(cfg, masks, round_t)
    sparse_global = global_model(updates)
    for i, client in enumerate(clients):
        grouped = grouped_model(updates, plan, i)
        combined = combine(grouped, sparse_global, masks[i])
        up = account_uplink(updates[i], "fedpurin")
        down = account_downlink(combined, "fedpurin", round_t, cfg.beta)
        ledger.append(
            LedgerRow(
                round_t,
                i,
                up,
                down,
                int(np.count_nonzero(updates[i].sparse_params)),
                int(np.count_nonzero(combined)),
            )
        )
        client.params = combined
    return plan


def _fedcac_round(
    cfg: RunConfig,
    model: Mlp,
    clients: list[ClientState],
    round_t: int,
    ledger: list[LedgerRow],
    score_hook: ScoreHook | None,
) -> CollabPlan:
    masks = _client_masks(cfg, model, clients, round_t, score_hook)
    full_params = [c.params for c in clients]
    plan = _plan_round(cfg, masks, round_t)
    dense_global = fold_mean(full_params)
    d = model.num_params
    new_params: list[np.ndarray] = []
    for i in range(cfg.num_clients):
        critical = int(masks[i].sum())
        if round_t <= cfg.beta:
            member_ids = sorted({i, *plan.sets[i]})
            grouped = fold_mean([full_params[j] for j in member_ids])
            combined = combine(grouped, dense_global, masks[i])
            down_nnz = d
        else:
            # critical collaboration halts: critical positions stay local
            combined = combine(full_params[i], dense_global, masks[i])
            down_nnz = d - critical
        up = BYTES_PER_VALUE * d + mask_bytes(d)
        down = account_downlink(
            combined, "fedcac", round_t, cfg.beta, critical_count=critical
        )
        ledger.append(LedgerRow(round_t, i, up, down, d, down_nnz))
        new_params.append(combined)
    for client, params in zip(clients, new_params):
        client.params = params
    return plan


def run_fedavg(cfg: RunConfig) -> RunResult:
    return run(replace(cfg, method="fedavg"))


def run_separate(cfg: RunConfig) -> RunResult:
    return run(replace(cfg, method="separate"))


def run_fedper(cfg: RunConfig) -> RunResult:
    return run(replace(cfg, method="fedper"))


def run_fedcac(cfg: RunConfig) -> RunResult:
    return run(replace(cfg, method="fedcac"))


def metrics_csv_lines(result: RunResult) -> list[str]:
    lines = ["round,client_id,test_acc,train_loss"]
    for row in result.metrics:
        for i, acc in enumerate(row.per_client_accuracy):
            lines.append(f"{row.round},{i},{acc!r},{row.mean_train_loss!r}")
    return lines


def ledger_csv_lines(result: RunResult) -> list[str]:
    lines = ["round,client_id,uplink_bytes,downlink_bytes,uplink_nnz,downlink_nnz"]
    for row in result.ledger:
        lines.append(
            f"{row.round},{row.client_id},{row.uplink_bytes},{row.downlink_bytes},"
            f"{row.uplink_nnz},{row.downlink_nnz}"
        )
    return lines


def summary_dict(result: RunResult) -> dict:
    cfg = result.config
    up, down = result.total_bytes()
    cells = cfg.rounds * cfg.num_clients
    return {
        "config": config_items(cfg),
        "method": cfg.method,
        "seed": cfg.seed,
        "rounds": cfg.rounds,
        "num_clients": cfg.num_clients,
        "num_params": result.num_params,
        "best_mean_accuracy": result.best_mean_accuracy,
        "best_round": result.best_round,
        "total_uplink_bytes": up,
        "total_downlink_bytes": down,
        "uplink_bytes_per_round_per_client": up / cells,
        "downlink_bytes_per_round_per_client": down / cells,
        "partition_resampled_per_client": list(result.partition_report.resampled_per_client),
        "downlink_accounting": "value payload only; no downlink mask term",
    }


def write_run_artifacts(out_dir: str | Path, result: RunResult) -> Path:
    """Write metrics.csv, ledger.csv, and summary.json; returns the directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text("\n".join(metrics_csv_lines(result)) + "\n")
    (out / "ledger.csv").write_text("\n".join(ledger_csv_lines(result)) + "\n")
    with open(out / "summary.json", "w") as fh:
        json.dump(summary_dict(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out
