"""Multi-step gossip averaging and its Chebyshev-style accelerated variant.

Values are stacked as an ``(n, d)`` array, one row per node. Every inner
gossip step is one network exchange and is charged as one communication.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from spdo.topology import MixingMatrix


@dataclass(frozen=True)
class GossipBatch:
    values: np.ndarray
    comm_steps: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        object.__setattr__(self, "values", vals)
        if self.comm_steps < 0:
            raise ValueError("comm_steps must be nonnegative")


def _mix(W: np.ndarray, A: np.ndarray) -> np.ndarray:
    # Accumulate sum_j W[:, j] a_j in ascending j so the result is
    # bitwise-reproducible independent of BLAS threading.
    out = np.zeros_like(A)
    for j in range(W.shape[0]):
        out += W[:, j, None] * A[j]
    return out


def _check(batch: GossipBatch, mix: MixingMatrix, M: int):
    if batch.values.shape[0] != mix.n:
        raise ValueError(
            f"batch has {batch.values.shape[0]} rows but mixing matrix is {mix.n}x{mix.n}"
        )
    if M < 0:
        raise ValueError(f"M must be >= 0, got {M}")


def multi_gossip(batch: GossipBatch, mix: MixingMatrix, M: int) -> GossipBatch:
    """Apply ``M`` plain gossip steps: ``values <- W^M values``."""
    _check(batch, mix, M)
    a = batch.values
    for _ in range(M):
        a = _mix(mix.W, a)
    return GossipBatch(a, batch.comm_steps + M)


def fast_gossip(batch: GossipBatch, mix: MixingMatrix, M: int, gamma: float) -> GossipBatch:
    """Two-term accelerated gossip.

    ``a^{m+1} = (1 + gamma) W a^m - gamma a^{m-1}`` with both history slots
    starting at the input. ``gamma = 0`` reduces to :func:`multi_gossip`.
    """
    _check(batch, mix, M)
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    prev = batch.values
    cur = batch.values
    for _ in range(M):
        if gamma == 0.0:
            nxt = _mix(mix.W, cur)
        else:
            nxt = (1.0 + gamma) * _mix(mix.W, cur) - gamma * prev
        prev, cur = cur, nxt
    return GossipBatch(cur, batch.comm_steps + M)


def chebyshev_gamma(rho: float) -> float:
    """Momentum for :func:`fast_gossip`, ``(1 - sqrt(1 - rho^2)) / (1 + sqrt(1 + rho^2))``."""
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    return (1.0 - np.sqrt(1.0 - rho**2)) / (1.0 + np.sqrt(1.0 + rho**2))


def consensus_error(values: np.ndarray) -> float:
    """Sum over nodes of squared distance to the node average."""
    X = np.asarray(values, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return float(np.sum((X - X.mean(axis=0)) ** 2))
