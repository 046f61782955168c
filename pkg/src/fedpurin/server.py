"""Server-side round logic: overlap, collaboration planning, aggregation.

All means are sequential left folds in ascending client id so that results
are bitwise reproducible and independent of any client-side parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ProtocolError


@dataclass(frozen=True, eq=False)
class ClientUpdate:
    """One client's upload: masked parameters and the mask itself."""

    client_id: int
    sparse_params: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        if self.sparse_params.shape != self.mask.shape:
            raise ConfigError("update arrays must be aligned")
        if np.any(self.sparse_params[~self.mask] != 0.0):
            raise ConfigError("masked-out positions must be zero")


@dataclass(frozen=True)
class CollabPlan:
    """Round threshold and, per client, the sorted list of partner ids."""

    threshold: float
    sets: tuple[tuple[int, ...], ...]


def overlap(mask_i: np.ndarray, mask_j: np.ndarray) -> float:
    """Mask agreement in [0, 1]: 1 - hamming / (n_i + n_j).

    Equals 2*|intersection| / (n_i + n_j); identical masks give 1.0 and
    disjoint equal-size masks give 0.0. Two empty selections count as
    identical (overlap 1).
    """
    if mask_i.shape != mask_j.shape:
        raise ConfigError("masks must have equal length")
    n_total = int(mask_i.sum()) + int(mask_j.sum())
    if n_total == 0:
        return 1.0
    hamming = int(np.count_nonzero(mask_i != mask_j))
    return 1.0 - hamming / n_total


def overlap_matrix(masks: list[np.ndarray]) -> np.ndarray:
    """Symmetric pairwise overlap; the diagonal is unused and left at 0."""
    n = len(masks)
    o = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            o[i, j] = o[j, i] = overlap(masks[i], masks[j])
    return o


def schedule_threshold(round_t: int, o: np.ndarray, beta: int) -> float:
    """Collaboration threshold for round t.

    Interpolates from the mean off-diagonal overlap at t=0 to the maximum at
    t=beta; past beta it exceeds the maximum, emptying every collaboration
    set. Computed as o_avg*(1-u) + o_max*u with u = t/beta, which is the same
    affine schedule but lands exactly on both endpoints in floating point.
    """
    n = o.shape[0]
    if o.shape != (n, n) or n < 2:
        raise ConfigError("overlap matrix must be square with N >= 2")
    if beta < 1:
        raise ConfigError("beta must be >= 1")
    off_diag = ~np.eye(n, dtype=bool)
    o_avg = float(np.mean(o[off_diag]))
    o_max = float(np.max(o[off_diag]))
    u = round_t / beta
    return o_avg * (1.0 - u) + o_max * u


def plan_collaboration(o: np.ndarray, threshold: float) -> CollabPlan:
    """Partner sets C_i = {j != i : o[i, j] >= threshold}."""
    n = o.shape[0]
    sets = tuple(
        tuple(j for j in range(n) if j != i and o[i, j] >= threshold) for i in range(n)
    )
    return CollabPlan(threshold=threshold, sets=sets)


def fold_mean(vectors: list[np.ndarray]) -> np.ndarray:
    """Sequential left-fold mean; order of the input list is preserved."""
    if not vectors:
        raise ConfigError("cannot average an empty list")
    acc = vectors[0].copy()
    for v in vectors[1:]:
        acc = acc + v
    return acc / len(vectors)


def grouped_model(
    updates: list[ClientUpdate], plan: CollabPlan, client_id: int
) -> np.ndarray:
    """Mean of masked uploads over {client} U partners, ascending id order.

    The server only holds masked vectors, so partners contribute zeros at
    positions they did not select.
    """
    by_id = {u.client_id: u for u in updates}
    member_ids = sorted({client_id, *plan.sets[client_id]})
    missing = [i for i in member_ids if i not in by_id]
    if missing:
        raise ProtocolError(f"no update for plan members {missing}")
    return fold_mean([by_id[i].sparse_params for i in member_ids])


def global_model(updates: list[ClientUpdate]) -> np.ndarray:
    """Mean of all masked uploads; exactly zero where no client selected."""
    ordered = sorted(updates, key=lambda u: u.client_id)
    return fold_mean([u.sparse_params for u in ordered])


def combine(delta: np.ndarray, global_params: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-position select: mask bit 1 takes delta, bit 0 takes the global model."""
    if delta.shape != global_params.shape or delta.shape != mask.shape:
        raise ConfigError("combine inputs must be aligned")
    return np.where(mask, delta, global_params)


def empty_plan(num_clients: int) -> CollabPlan:
    """Self-only plan used when no collaboration is possible (N == 1)."""
    return CollabPlan(threshold=math.inf, sets=tuple(() for _ in range(num_clients)))
