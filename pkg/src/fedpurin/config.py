"""Run configuration: dataclasses plus a flat dotted-key file format.

Config files are plain text, one ``key=value`` per line, ``#`` comments and
blank lines allowed. Every key has a documented default, so an empty file is
a valid config. ``write_config`` emits a canonical file that parses back to
an equal RunConfig.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .data import PartitionSpec
from .errors import ConfigError
from .saliency import ScoreConfig

METHODS = ("fedpurin", "fedavg", "separate", "fedcac", "fedper")
DATA_SOURCES = ("synthetic", "idx", "csv")


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    num_classes: int = 10
    feature_dim: int = 16
    samples_per_class: int = 200
    separation: float = 3.0
    images_path: str | None = None
    labels_path: str | None = None
    csv_path: str | None = None

    def __post_init__(self) -> None:
        if self.source not in DATA_SOURCES:
            raise ConfigError(f"data.source must be one of {DATA_SOURCES}")
        if self.source == "idx" and not self.images_path:
            raise ConfigError("data.images_path is required when data.source=idx")
        if self.source == "csv" and not self.csv_path:
            raise ConfigError("data.csv_path is required when data.source=csv")
        if self.source == "synthetic":
            if self.num_classes < 2:
                raise ConfigError("data.num_classes must be >= 2")
            if self.feature_dim < 1 or self.samples_per_class < 1:
                raise ConfigError("data dimensions must be positive")


@dataclass(frozen=True)
class RunConfig:
    method: str = "fedpurin"
    seed: int = 0
    num_clients: int = 20
    rounds: int = 30
    local_epochs: int = 5
    batch_size: int = 10
    lr: float = 0.1
    beta: int = 100
    hidden_dims: tuple[int, ...] = (32,)
    force_threshold: float | None = None
    score: ScoreConfig = field(default_factory=ScoreConfig)
    partition: PartitionSpec = field(default_factory=PartitionSpec)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.num_clients < 1:
            raise ConfigError("num_clients must be >= 1")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.local_epochs < 0:
            raise ConfigError("local_epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr < 0.0:
            raise ConfigError("lr must be >= 0")
        if self.beta < 1:
            raise ConfigError("beta must be >= 1")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError("model.hidden entries must be positive")
        if self.partition.num_clients != self.num_clients:
            object.__setattr__(self, "partition", replace(self.partition, num_clients=self.num_clients))


def _parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ConfigError(f"expected true/false, got {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(part) for part in text.split(","))


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


# key -> (parser, getter). Canonical file order follows this table.
_SCHEMA: dict[str, tuple] = {
    "method": (str, lambda c: c.method),
    "seed": (int, lambda c: c.seed),
    "num_clients": (int, lambda c: c.num_clients),
    "rounds": (int, lambda c: c.rounds),
    "local_epochs": (int, lambda c: c.local_epochs),
    "batch_size": (int, lambda c: c.batch_size),
    "lr": (float, lambda c: c.lr),
    "beta": (int, lambda c: c.beta),
    "force_threshold": (float, lambda c: c.force_threshold),
    "model.hidden": (_parse_int_list, lambda c: c.hidden_dims),
    "score.tau": (float, lambda c: c.score.tau),
    "score.gradient_source": (str, lambda c: c.score.gradient_source),
    "score.include_hessian": (_parse_bool, lambda c: c.score.include_hessian),
    "score.cutoff": (float, lambda c: c.score.cutoff),
    "partition.alpha": (float, lambda c: c.partition.alpha),
    "partition.train_per_client": (int, lambda c: c.partition.train_per_client),
    "partition.test_per_client": (int, lambda c: c.partition.test_per_client),
    "partition.seed": (int, lambda c: c.partition.seed),
    "data.source": (str, lambda c: c.data.source),
    "data.num_classes": (int, lambda c: c.data.num_classes),
    "data.feature_dim": (int, lambda c: c.data.feature_dim),
    "data.samples_per_class": (int, lambda c: c.data.samples_per_class),
    "data.separation": (float, lambda c: c.data.separation),
    "data.images_path": (str, lambda c: c.data.images_path),
    "data.labels_path": (str, lambda c: c.data.labels_path),
    "data.csv_path": (str, lambda c: c.data.csv_path),
}

# keys whose value may be absent; written only when set.
_OPTIONAL = {
    "force_threshold",
    "partition.seed",
    "data.images_path",
    "data.labels_path",
    "data.csv_path",
}


def read_config_file(path: str | Path) -> dict[str, str]:
    """Raw key=value pairs from a config file, without type conversion."""
    items: dict[str, str] = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {line_no}: expected key=value")
        key, _, value = line.partition("=")
        items[key.strip()] = value.strip()
    return items


def config_from_items(items: dict[str, str]) -> RunConfig:
    """Build a RunConfig from string key/value pairs, applying defaults."""
    typed: dict[str, object] = {}
    for key, raw in items.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key: {key}")
        parser = _SCHEMA[key][0]
        try:
            typed[key] = parser(raw)
        except ConfigError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {raw!r}") from exc

    def get(key: str, default):
        return typed.get(key, default)

    try:
        score = ScoreConfig(
            gradient_source=get("score.gradient_source", "exact_grad"),
            include_hessian=get("score.include_hessian", False),
            tau=get("score.tau", 0.5),
            cutoff=get("score.cutoff", 1e-10),
        )
        num_clients = get("num_clients", 20)
        partition = PartitionSpec(
            alpha=get("partition.alpha", 0.1),
            num_clients=num_clients,
            train_per_client=get("partition.train_per_client", 50),
            test_per_client=get("partition.test_per_client", 10),
            seed=get("partition.seed", None),
        )
        data = DataConfig(
            source=get("data.source", "synthetic"),
            num_classes=get("data.num_classes", 10),
            feature_dim=get("data.feature_dim", 16),
            samples_per_class=get("data.samples_per_class", 200),
            separation=get("data.separation", 3.0),
            images_path=get("data.images_path", None),
            labels_path=get("data.labels_path", None),
            csv_path=get("data.csv_path", None),
        )
        return RunConfig(
            method=get("method", "fedpurin"),
            seed=get("seed", 0),
            num_clients=num_clients,
            rounds=get("rounds", 30),
            local_epochs=get("local_epochs", 5),
            batch_size=get("batch_size", 10),
            lr=get("lr", 0.1),
            beta=get("beta", 100),
            hidden_dims=get("model.hidden", (32,)),
            force_threshold=get("force_threshold", None),
            score=score,
            partition=partition,
            data=data,
        )
    except ConfigError:
        raise
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(path: str | Path | None, overrides: list[str] | None = None) -> RunConfig:
    """Load a config file (optional) and apply ``key=value`` overrides last."""
    items = read_config_file(path) if path is not None else {}
    for entry in overrides or []:
        if "=" not in entry:
            raise ConfigError(f"override must be key=value, got {entry!r}")
        key, _, value = entry.partition("=")
        items[key.strip()] = value.strip()
    return config_from_items(items)


def config_items(cfg: RunConfig) -> dict[str, object]:
    """Typed key/value view of a config, optional unset keys omitted."""
    out: dict[str, object] = {}
    for key, (_, getter) in _SCHEMA.items():
        value = getter(cfg)
        if value is None and key in _OPTIONAL:
            continue
        out[key] = value
    return out


def write_config(cfg: RunConfig, path: str | Path) -> None:
    """Write the canonical key=value form; parse_config inverts it exactly."""
    lines = [f"{key}={_format_value(value)}" for key, value in config_items(cfg).items()]
    Path(path).write_text("\n".join(lines) + "\n")
