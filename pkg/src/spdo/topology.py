"""Communication graphs and Metropolis-Hastings mixing matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

KINDS = ("ring", "complete", "grid", "erdos_renyi")
ER_MAX_RETRIES = 100


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"node count must be >= 1, got {self.n}")
        canon = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            canon.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(canon))
        if not nx.is_connected(self.to_networkx()):
            raise ValueError("graph is not connected")

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def diameter(self) -> int:
        if self.n == 1:
            return 0
        return nx.diameter(self.to_networkx())


@dataclass(frozen=True)
class MixingMatrix:
    W: np.ndarray
    rho: float

    @property
    def n(self) -> int:
        return self.W.shape[0]


def build_graph(kind: str, n: int, seed: int | None = None, p: float | None = None) -> Graph:
    """Build a connected graph of the given family.

    ``grid`` lays nodes out row-major on the most square ``rows x cols``
    factorization of ``n``. ``erdos_renyi`` needs ``p`` and resamples until
    connected.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    if kind == "ring":
        if n == 1:
            edges = []
        elif n == 2:
            edges = [(0, 1)]
        else:
            edges = [(i, (i + 1) % n) for i in range(n)]
        return Graph(n, frozenset(edges))
    if kind == "complete":
        return Graph(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))
    if kind == "grid":
        rows = int(np.floor(np.sqrt(n)))
        while n % rows:
            rows -= 1
        cols = n // rows
        edges = []
        for r in range(rows):
            for c in range(cols):
                k = r * cols + c
                if c + 1 < cols:
                    edges.append((k, k + 1))
                if r + 1 < rows:
                    edges.append((k, k + cols))
        return Graph(n, frozenset(edges))
    if kind == "erdos_renyi":
        if p is None or not (0 < p <= 1):
            raise ValueError(f"erdos_renyi needs 0 < p <= 1, got {p!r}")
        rng = np.random.default_rng(seed)
        for _ in range(ER_MAX_RETRIES):
            upper = rng.random((n, n)) < p
            edges = [(i, j) for i in range(n) for j in range(i + 1, n) if upper[i, j]]
            g = nx.Graph()
            g.add_nodes_from(range(n))
            g.add_edges_from(edges)
            if nx.is_connected(g):
                return Graph(n, frozenset(edges))
        raise RuntimeError(
            f"no connected erdos_renyi(n={n}, p={p}) sample in {ER_MAX_RETRIES} tries"
        )
    raise ValueError(f"unknown topology kind {kind!r}; expected one of {KINDS}")


def _consensus_rho(W: np.ndarray, tol: float = 1e-10) -> float:
    # Power iteration on (W - 11^T/n)^2 so that negative eigenvalues do not
    # flip signs; the all-ones direction is deflated every step.
    n = W.shape[0]
    if n == 1:
        return 0.0
    J = W - np.full((n, n), 1.0 / n)
    v = np.random.default_rng(0).standard_normal(n)
    v -= v.mean()
    v /= np.linalg.norm(v)
    for _ in range(10 * n):
        w = J @ (J @ v)
        w -= w.mean()
        theta = float(v @ w)
        if theta <= 0.0:
            return 0.0
        # eigen-residual test; successive-estimate differences stall on slow gaps
        if np.linalg.norm(w - theta * v) <= tol * theta:
            return float(np.sqrt(theta))
        v = w / np.linalg.norm(w)
    # Budget exhausted (nearly repeated top eigenvalues, e.g. long rings).
    return float(np.max(np.abs(np.linalg.eigvalsh(J))))


def metropolis_weights(g: Graph) -> MixingMatrix:
    """Max-degree Metropolis-Hastings weights; diagonal takes the remainder."""
    n = g.n
    deg = g.degrees()
    W = np.zeros((n, n))
    for i, j in sorted(g.edges):
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[i, j] = w
        W[j, i] = w
    for i in range(n):
        W[i, i] = 1.0 - (W[i].sum() - W[i, i])
    if len(g.edges) == n * (n - 1) // 2:
        # complete graph: every weight is 1/n; write it exactly
        W = np.full((n, n), 1.0 / n)
    rho = _consensus_rho(W)
    if rho >= 1.0:
        raise ValueError(f"mixing matrix has rho={rho} >= 1")
    return MixingMatrix(W=W, rho=rho)


def spectral_gap_check(mix: MixingMatrix, vectors) -> tuple[float, float]:
    """Both sides of the one-step consensus contraction inequality.

    Returns ``(sum_i ||(W x)_i - xbar||^2, rho^2 sum_i ||x_i - xbar||^2)``.
    """
    X = np.asarray(vectors, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != mix.n:
        raise ValueError(f"expected ({mix.n}, d) stacked vectors, got shape {X.shape}")
    xbar = X.mean(axis=0)
    lhs = float(np.sum((mix.W @ X - xbar) ** 2))
    rhs = float(mix.rho**2 * np.sum((X - xbar) ** 2))
    return lhs, rhs
