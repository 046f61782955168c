"""Deterministic simulator for sparse personalized federated learning.

Implements saliency-driven critical-parameter exchange between N clients and
a server, the Separate / FedAvg / FedPer / FedCAC baselines, Dirichlet
non-IID partitioning, and byte-exact communication accounting.
"""

from .config import DataConfig, RunConfig, parse_config, write_config
from .data import Dataset, PartitionSpec, dirichlet_partition, generate_synthetic, load_csv, load_idx
from .errors import ConfigError, DataFormatError, NumericError, ProtocolError
from .nn import GradientSnapshot, LayerSpec, Mlp, local_train, sgd_step
from .orchestrator import (
    account_downlink,
    account_uplink,
    run,
    run_fedavg,
    run_fedcac,
    run_fedper,
    run_separate,
    RunResult,
    write_run_artifacts,
)
from .saliency import ScoreConfig, build_mask, flip_perturbation, score
from .server import (
    ClientUpdate,
    CollabPlan,
    combine,
    global_model,
    grouped_model,
    overlap,
    plan_collaboration,
    schedule_threshold,
)

__version__ = "0.1.0"

__all__ = [
    "ClientUpdate",
    "CollabPlan",
    "ConfigError",
    "DataConfig",
    "DataFormatError",
    "Dataset",
    "GradientSnapshot",
    "LayerSpec",
    "Mlp",
    "NumericError",
    "PartitionSpec",
    "ProtocolError",
    "RunConfig",
    "RunResult",
    "ScoreConfig",
    "account_downlink",
    "account_uplink",
    "build_mask",
    "combine",
    "dirichlet_partition",
    "flip_perturbation",
    "generate_synthetic",
    "global_model",
    "grouped_model",
    "load_csv",
    "load_idx",
    "local_train",
    "overlap",
    "parse_config",
    "plan_collaboration",
    "run",
    "run_fedavg",
    "run_fedcac",
    "run_fedper",
    "run_separate",
    "schedule_threshold",
    "score",
    "sgd_step",
    "write_config",
    "write_run_artifacts",
]
