"""Per-parameter perturbation scores and critical-parameter masks.

The score of element j estimates the loss change caused by zeroing that
parameter, via a diagonal second-order expansion with the squared
batch-averaged gradient standing in for the Hessian diagonal:

    score_j = | -g_j * theta_j + 1/2 * g_j^2 * theta_j^2 |

With the second-order term disabled this reduces to the classic sensitivity
measure |g_j * theta_j|. The gradient g is either the exact final-batch
gradient or the parameter movement delta_theta, per configuration.

Masks mark, layer by layer, the ceil(tau * layer_length) largest scores, then
drop any marked element whose score falls below the cutoff (selected
near-zero perturbations are not worth transmitting).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nn import GradientSnapshot, LayerSlot

GRADIENT_SOURCES = ("exact_grad", "delta_theta")


@dataclass(frozen=True)
class ScoreConfig:
    gradient_source: str = "exact_grad"
    include_hessian: bool = False
    tau: float = 0.5
    cutoff: float = 1e-10

    def __post_init__(self) -> None:
        if self.gradient_source not in GRADIENT_SOURCES:
            raise ConfigError(f"gradient_source must be one of {GRADIENT_SOURCES}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau out of (0,1]")
        if self.cutoff < 0.0:
            raise ConfigError("cutoff must be >= 0")


def score(theta: np.ndarray, snapshot: GradientSnapshot, cfg: ScoreConfig) -> np.ndarray:
    """Nonnegative per-parameter perturbation magnitudes, aligned to theta."""
    g = snapshot.exact_grad if cfg.gradient_source == "exact_grad" else snapshot.delta_theta
    if g.shape != theta.shape:
        raise ConfigError("snapshot is not aligned to the parameter vector")
    first = g * theta
    if cfg.include_hessian:
        return np.abs(-first + 0.5 * first * first)
    return np.abs(first)


def flip_perturbation(theta_j: float, g_j: float, m_prev_j: int, include_hessian: bool) -> float:
    """Loss perturbation from flipping one mask bit away from its previous value.

    With ``m_prev_j == 1`` (the operating regime: models re-densify before the
    next selection) this equals ``score`` for that element.
    """
    if m_prev_j not in (0, 1):
        raise ConfigError("previous mask bit must be 0 or 1")
    t = g_j * theta_j * (1 - 2 * m_prev_j)
    if include_hessian:
        return abs(t + 0.5 * t * t)
    return abs(t)


def build_mask(scores: np.ndarray, cfg: ScoreConfig, layout: list[LayerSlot]) -> np.ndarray:
    """Layer-wise top-tau selection followed by the cutoff rule.

    Per layer the ceil(tau * length) largest scores are marked, ties resolved
    toward the lower flat index; marked bits with score < cutoff are then
    cleared. Returns a boolean vector aligned to the scores.
    """
    total = sum(slot.length for slot in layout)
    if scores.shape != (total,):
        raise ConfigError("scores are not aligned to the layout")
    mask = np.zeros(total, dtype=bool)
    for slot in layout:
        segment = scores[slot.offset : slot.offset + slot.length]
        k = min(slot.length, math.ceil(cfg.tau * slot.length))
        # stable argsort on negated scores: descending value, ascending index.
        picked = np.argsort(-segment, kind="stable")[:k]
        mask[slot.offset + picked] = True
    return mask & (scores >= cfg.cutoff)
