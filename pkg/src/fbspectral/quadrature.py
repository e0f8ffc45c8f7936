"""Tensor Gauss-Legendre rules on axis-aligned boxes."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(int(order))
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def box_rule(lower, upper, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor rule on the box ``[lower, upper]`` (3-vectors); returns (order**3, 3) nodes and weights."""
    u, w = gauss_legendre(order)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    half = (upper - lower) / 2
    mid = (upper + lower) / 2
    axes = [mid[i] + half[i] * u for i in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    weight = np.einsum("i,j,k->ijk", w, w, w).reshape(-1) * np.prod(half)
    return grid, weight


def batched_box_rule(lower: np.ndarray, upper: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor rules on a stack of boxes ``lower, upper`` of shape (K, 3).

    Empty boxes (``upper < lower`` on some axis) get zero weight.
    Returns nodes (K, order**3, 3) and weights (K, order**3).
    """
    u, w = gauss_legendre(order)
    lower = np.asarray(lower, dtype=float)
    length = np.clip(np.asarray(upper, dtype=float) - lower, 0.0, None)
    half = length / 2
    mid = lower + half
    q = len(u)
    nodes = np.empty((lower.shape[0], q, q, q, 3))
    nodes[..., 0] = (mid[:, 0, None] + half[:, 0, None] * u)[:, :, None, None]
    nodes[..., 1] = (mid[:, 1, None] + half[:, 1, None] * u)[:, None, :, None]
    nodes[..., 2] = (mid[:, 2, None] + half[:, 2, None] * u)[:, None, None, :]
    weights = np.einsum("i,j,k->ijk", w, w, w).reshape(1, -1) * np.prod(half, axis=1)[:, None]
    return nodes.reshape(lower.shape[0], -1, 3), weights
