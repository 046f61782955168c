from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedpurin.config import (
    ConfigError,
    DataConfig,
    RunConfig,
    config_items,
    parse_config,
    write_config,
)
from fedpurin.data import PartitionSpec
from fedpurin.saliency import ScoreConfig


def test_empty_config_gives_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("")
    cfg = parse_config(path)
    assert cfg == RunConfig()
    assert cfg.score.tau == 0.5
    assert cfg.beta == 100
    assert cfg.num_clients == 20
    assert cfg.local_epochs == 5
    assert cfg.lr == 0.1


def test_missing_path_means_defaults():
    assert parse_config(None) == RunConfig()


def test_comments_and_blank_lines(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\n\nmethod=fedavg\n  rounds = 3  \n")
    cfg = parse_config(path)
    assert cfg.method == "fedavg"
    assert cfg.rounds == 3


def test_override_applies_last(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("score.tau=0.4\n")
    cfg = parse_config(path, ["score.tau=0.3"])
    assert cfg.score.tau == 0.3


def test_tau_validation_message():
    with pytest.raises(ConfigError, match=r"tau out of \(0,1\]"):
        parse_config(None, ["score.tau=1.5"])


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="unknown config key: scoer.tau"):
        parse_config(None, ["scoer.tau=0.5"])


def test_type_mismatch_named():
    with pytest.raises(ConfigError, match="rounds"):
        parse_config(None, ["rounds=three"])


def test_method_validation():
    with pytest.raises(ConfigError, match="method"):
        parse_config(None, ["method=fedprox"])


def test_partition_num_clients_follows_top_level():
    cfg = parse_config(None, ["num_clients=7"])
    assert cfg.partition.num_clients == 7


def test_hidden_dims_parsing():
    cfg = parse_config(None, ["model.hidden=64,32"])
    assert cfg.hidden_dims == (64, 32)
    cfg = parse_config(None, ["model.hidden="])
    assert cfg.hidden_dims == ()


def test_data_source_requirements():
    with pytest.raises(ConfigError, match="images_path"):
        parse_config(None, ["data.source=idx"])
    with pytest.raises(ConfigError, match="csv_path"):
        parse_config(None, ["data.source=csv"])


def test_round_trip_default(tmp_path):
    cfg = RunConfig()
    path = tmp_path / "out.cfg"
    write_config(cfg, path)
    assert parse_config(path) == cfg


def test_round_trip_custom(tmp_path):
    cfg = RunConfig(
        method="fedcac",
        seed=12,
        num_clients=6,
        rounds=9,
        local_epochs=2,
        batch_size=16,
        lr=0.05,
        beta=4,
        hidden_dims=(48, 24),
        force_threshold=0.25,
        score=ScoreConfig(
            gradient_source="delta_theta", include_hessian=True, tau=0.3, cutoff=0.0
        ),
        partition=PartitionSpec(
            alpha=0.7, num_clients=6, train_per_client=30, test_per_client=8, seed=77
        ),
        data=DataConfig(num_classes=5, feature_dim=8, samples_per_class=100, separation=2.0),
    )
    path = tmp_path / "out.cfg"
    write_config(cfg, path)
    assert parse_config(path) == cfg


@given(
    tau=st.sampled_from([0.2, 0.5, 1.0]),
    hessian=st.booleans(),
    rounds=st.integers(1, 50),
    beta=st.integers(1, 200),
    seed=st.integers(0, 10**6),
    lr=st.sampled_from([0.01, 0.1, 0.5]),
)
def test_round_trip_property(tmp_path_factory, tau, hessian, rounds, beta, seed, lr):
    cfg = RunConfig(
        rounds=rounds,
        beta=beta,
        seed=seed,
        lr=lr,
        score=ScoreConfig(tau=tau, include_hessian=hessian),
    )
    path = tmp_path_factory.mktemp("cfg") / "c.cfg"
    write_config(cfg, path)
    assert parse_config(path) == cfg


def test_config_items_omits_unset_optionals():
    items = config_items(RunConfig())
    assert "force_threshold" not in items
    assert "partition.seed" not in items
    items = config_items(RunConfig(force_threshold=0.0))
    assert items["force_threshold"] == 0.0
