"""Adaptive credit assignment from local/global ranking consistency."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def _as_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise DataError(f"{name}: non-finite entries")
    return v


def ndcg_consistency(local, global_) -> float:
    """NDCG of the ranking induced by ``local`` against ``global_`` as relevance.

    Relevance is the global reward shifted so its minimum is 0. Items are
    ranked by descending local reward, ties by ascending index; the discount
    at 1-based rank p is ``log2(p + 1)``. A group whose global rewards are all
    equal has no ideal ordering and scores 1.
    """
    local = _as_vector(local, "local")
    glob = _as_vector(global_, "global")
    if local.shape != glob.shape:
        raise DataError(f"length mismatch: local has {local.size}, global has {glob.size}")
    if local.size < 2:
        raise DataError(f"need a group of at least 2, got {local.size}")
    rel = glob - glob.min()
    discount = 1.0 / np.log2(np.arange(2, rel.size + 2))
    # lexsort: last key is primary
    idx = np.arange(rel.size)
    order = np.lexsort((idx, -local))
    ideal = np.lexsort((idx, -rel))
    idcg = float(rel[ideal] @ discount)
    if idcg == 0.0:
        return 1.0
    return float(rel[order] @ discount) / idcg


def credit_weights(v) -> np.ndarray:
    v = _as_vector(v, "consistency scores")
    e = np.exp(v - v.max())
    return e / e.sum()


def integrate_rewards(group, weights, transposed: bool = False) -> np.ndarray:
    """Final rewards for a TrajectoryGroup, shape ``(n_agents, G)``."""
    return final_rewards(group.local_matrix(), group.global_rewards, weights, transposed)


def final_rewards(local, global_, weights, transposed: bool = False) -> np.ndarray:
    """Per-agent final rewards, shape ``(n_agents, G)``.

    ``local`` has shape (n_agents, G). The default form adds the weighted
    global reward to each agent's local reward; ``transposed=True`` instead
    returns ``global + w_n * local_n``.
    """
    local = np.asarray(local, dtype=float)
    glob = _as_vector(global_, "global")
    w = _as_vector(weights, "weights")
    if local.ndim != 2 or local.shape[1] != glob.size or local.shape[0] != w.size:
        raise DataError(f"shape mismatch: local {local.shape}, global {glob.shape}, weights {w.shape}")
    if transposed:
        return glob[None, :] + w[:, None] * local
    return local + w[:, None] * glob[None, :]


def group_credit(local, global_) -> tuple[np.ndarray, np.ndarray]:
    """Consistency scores and adaptive weights for one trajectory group."""
    local = np.asarray(local, dtype=float)
    v = np.array([ndcg_consistency(row, global_) for row in local])
    return v, credit_weights(v)
