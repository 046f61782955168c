from __future__ import annotations

import numpy as np
import pytest

from fedpurin.nn import LayerSpec, Mlp


def random_mlp(rng: np.random.Generator, max_params: int = 200) -> tuple[Mlp, np.ndarray]:
    """Small random model plus random parameters, for oracle checks."""
    while True:
        features = int(rng.integers(2, 7))
        hidden = int(rng.integers(3, 9))
        classes = int(rng.integers(2, 5))
        depth = int(rng.integers(1, 3))
        dims = [features] + [hidden] * depth + [classes]
        layers = [
            LayerSpec(dims[i], dims[i + 1], "relu" if i < len(dims) - 2 else "identity")
            for i in range(len(dims) - 1)
        ]
        model = Mlp(layers)
        if model.num_params <= max_params:
            params = rng.normal(0.0, 0.8, size=model.num_params)
            return model, params


def random_batch(
    rng: np.random.Generator, model: Mlp, max_batch: int = 5
) -> tuple[np.ndarray, np.ndarray]:
    batch = int(rng.integers(1, max_batch + 1))
    x = rng.normal(0.0, 1.0, size=(batch, model.layers[0].input_dim))
    y = rng.integers(0, model.num_classes, size=batch)
    return x, y


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
