"""Local objective families, heterogeneous data partitioning and the
constants (mu, L, delta) that drive the theory.

Every local objective exposes ``value(x)`` and ``grad(x)``; an
:class:`ObjectiveSet` bundles ``n`` of them with their shared constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

PARTITION_MAX_RETRIES = 100


@dataclass(frozen=True)
class QuadraticLocal:
    """``f(x) = 0.5 x^T H x - b^T x``."""

    H: np.ndarray
    b: np.ndarray

    def value(self, x):
        return 0.5 * float(x @ self.H @ x) - float(self.b @ x)

    def grad(self, x):
        return self.H @ x - self.b


@dataclass(frozen=True)
class LogisticLocal:
    """Mean binary logistic loss plus ``reg/2 ||x||^2``; labels are 0/1."""

    features: np.ndarray
    labels: np.ndarray
    reg: float = 0.0

    def __post_init__(self):
        if self.reg < 0:
            raise ValueError("reg must be >= 0")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on sample count")

    def value(self, x):
        z = self.features @ x
        return float(np.mean(np.logaddexp(0.0, z) - self.labels * z)) + 0.5 * self.reg * float(x @ x)

    def grad(self, x):
        z = self.features @ x
        m = self.features.shape[0]
        return self.features.T @ (expit(z) - self.labels) / m + self.reg * x

    def smoothness_bound(self) -> float:
        return self.reg + float(np.max(np.sum(self.features**2, axis=1))) / 4.0


@dataclass
class ObjectiveSet:
    locals: list
    mu: float
    big_l: float
    delta: float
    x_star: np.ndarray | None = None
    f_star: float | None = None
    delta_is_exact: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.locals:
            raise ValueError("need at least one local objective")
        if self.mu < 0 or self.big_l <= 0:
            raise ValueError(f"need mu >= 0 and L > 0, got mu={self.mu}, L={self.big_l}")
        if self.mu > self.big_l * (1 + 1e-12):
            raise ValueError(f"mu={self.mu} exceeds L={self.big_l}")
        if self.delta < 0 or self.delta > self.big_l * (1 + 1e-9):
            raise ValueError(f"delta={self.delta} outside [0, L={self.big_l}]")

    @property
    def n(self) -> int:
        return len(self.locals)

    @property
    def d(self) -> int:
        first = self.locals[0]
        return first.b.shape[0] if isinstance(first, QuadraticLocal) else first.features.shape[1]

    def value(self, x) -> float:
        return float(np.mean([f.value(x) for f in self.locals]))

    def grad(self, x) -> np.ndarray:
        return self.local_grads_at(x).mean(axis=0)

    def local_grads_at(self, x) -> np.ndarray:
        """All local gradients at a single point, shape ``(n, d)``."""
        return np.stack([f.grad(x) for f in self.locals])

    def local_grads(self, X) -> np.ndarray:
        """Row ``i`` is ``grad f_i(X[i])``."""
        return np.stack([f.grad(X[i]) for i, f in enumerate(self.locals)])

    def is_quadratic(self) -> bool:
        return all(isinstance(f, QuadraticLocal) for f in self.locals)


# ---------------------------------------------------------------- partition


def dirichlet_partition(labels, n: int, alpha: float, seed=None, scheme: str = "class"):
    """Split sample indices across ``n`` nodes with Dirichlet label skew.

    ``scheme="class"`` draws, for every class, node proportions from
    ``Dirichlet(alpha 1_n)`` and routes that class's samples multinomially.
    ``scheme="node"`` draws a class mixture per node from
    ``Dirichlet(alpha p_global)`` and fills equal-size node quotas from it;
    this keeps every node non-empty even when there are fewer classes than
    nodes and ``alpha`` is tiny.

    Returns a list of ``n`` sorted index arrays that partition ``range(m)``.
    Raises ``RuntimeError`` if some node stays empty after
    ``PARTITION_MAX_RETRIES`` draws.
    """
    labels = np.asarray(labels)
    m = labels.shape[0]
    if n < 1 or m < n:
        raise ValueError(f"need 1 <= n <= m, got n={n}, m={m}")
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if n == 1:
        return [np.arange(m)]
    rng = np.random.default_rng(seed)
    classes = np.unique(labels)
    by_class = {c: np.flatnonzero(labels == c) for c in classes}

    for _ in range(PARTITION_MAX_RETRIES):
        if scheme == "class":
            parts = [[] for _ in range(n)]
            for c in classes:
                idx = rng.permutation(by_class[c])
                p = rng.dirichlet(np.full(n, alpha))
                counts = rng.multinomial(len(idx), p)
                for node, chunk in enumerate(np.split(idx, np.cumsum(counts)[:-1])):
                    parts[node].extend(chunk.tolist())
        elif scheme == "node":
            parts = _node_mixture_partition(labels, classes, by_class, n, alpha, rng)
        else:
            raise ValueError(f"unknown partition scheme {scheme!r}")
        if all(len(p) > 0 for p in parts):
            return [np.sort(np.asarray(p, dtype=int)) for p in parts]
    raise RuntimeError(
        f"could not give every node a sample in {PARTITION_MAX_RETRIES} draws "
        f"(n={n}, alpha={alpha}, classes={len(classes)})"
    )


def _node_mixture_partition(labels, classes, by_class, n, alpha, rng):
    m = labels.shape[0]
    prior = np.array([len(by_class[c]) for c in classes], dtype=float) / m
    pools = {c: list(rng.permutation(by_class[c])) for c in classes}
    quotas = np.full(n, m // n)
    quotas[: m % n] += 1
    parts = [[] for _ in range(n)]
    for node in range(n):
        q = rng.dirichlet(alpha * prior)
        for _ in range(quotas[node]):
            avail = np.array([len(pools[c]) > 0 for c in classes])
            w = q * avail
            if w.sum() <= 0:
                w = avail.astype(float)
            c = classes[rng.choice(len(classes), p=w / w.sum())]
            parts[node].append(pools[c].pop())
    return parts


# -------------------------------------------------------------------- delta


def exact_delta_quadratic(objs: ObjectiveSet) -> float:
    """Tight similarity constant for quadratic locals.

    ``sqrt(lambda_max(mean_i (Hbar - H_i)^T (Hbar - H_i)))``.
    """
    if not objs.is_quadratic():
        raise TypeError("exact delta is only available for quadratic locals")
    Hs = np.stack([f.H for f in objs.locals])
    dev = Hs.mean(axis=0) - Hs
    S = np.einsum("kji,kjl->il", dev, dev) / objs.n
    return float(np.sqrt(max(np.linalg.eigvalsh(0.5 * (S + S.T))[-1], 0.0)))


def estimate_delta(objs: ObjectiveSet, num_samples: int = 100, scale: float | None = None, seed=None) -> float:
    """Sampled lower bound on the similarity constant.

    Draws ``num_samples`` points from ``N(0, scale^2 I)`` (default
    ``scale = (2d)^{-1/2}``) and returns the largest ratio
    ``sqrt(mean_i ||g_i(x) - g_i(y)||^2) / ||x - y||`` over all pairs,
    where ``g_i = grad f - grad f_i``.
    """
    if num_samples < 2:
        raise ValueError("num_samples must be >= 2")
    d = objs.d
    if scale is None:
        scale = (2.0 * d) ** -0.5
    rng = np.random.default_rng(seed)
    X = rng.normal(0.0, scale, size=(num_samples, d))
    G = []
    for x in X:
        lg = objs.local_grads_at(x)
        G.append((lg.mean(axis=0) - lg).ravel())
    G = np.stack(G)
    best = None
    for k in range(num_samples - 1):
        dx = np.linalg.norm(X[k + 1 :] - X[k], axis=1)
        dg = np.sqrt(np.sum((G[k + 1 :] - G[k]) ** 2, axis=1) / objs.n)
        ok = dx > 0
        if np.any(ok):
            r = float(np.max(dg[ok] / dx[ok]))
            best = r if best is None else max(best, r)
    if best is None:
        raise ValueError("all sampled points coincide")
    return best


# ---------------------------------------------------------------- generators


def _orthogonal(d, rng):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def _perturbation_pattern(n, d, rng):
    # Per column: zero mean over nodes, mean square exactly 1.
    if n % 2 == 0:
        base = np.tile([1.0, -1.0], n // 2)
    else:
        base = np.concatenate([np.tile([1.0, -1.0], (n - 1) // 2), [0.0]]) * np.sqrt(n / (n - 1))
    return np.stack([rng.permutation(base) for _ in range(d)], axis=1)


def make_quadratic_ensemble(n, d, mu, big_l, target_delta, seed=None, spectrum="linear",
                            b_scale=1.0) -> ObjectiveSet:
    """Random quadratic locals with a prescribed similarity constant.

    All Hessians share one eigenbasis: ``H_i = Q diag(lbar + s * z_i) Q^T``.
    ``lbar`` is spread over ``[mu, L]`` (``spectrum="linear"``) or
    log-spaced from ``max(mu, 1e-6 L)`` to ``L`` (``"log"``); each
    coordinate gets perturbation amplitude ``min(target, room)`` so every
    eigenvalue stays in ``[mu, L]`` and the largest amplitude, which is the
    exact delta, equals ``target_delta``.

    Linear terms are ``b_i = H_i x_t + xi_i`` with a standard normal ``x_t``
    and node noise ``xi_i`` (scale ``b_scale``) centred across nodes, so the
    minimiser is ``x_t`` while local gradients there still disagree.
    """
    if not (0 <= mu <= big_l) or big_l <= 0:
        raise ValueError(f"need 0 <= mu <= L and L > 0, got mu={mu}, L={big_l}")
    if target_delta < 0 or target_delta > big_l - mu:
        raise ValueError(f"target_delta={target_delta} outside [0, L - mu]")
    if n == 1 and target_delta > 0:
        raise ValueError("a single node cannot have nonzero delta")
    rng = np.random.default_rng(seed)
    if spectrum == "linear":
        lbar = np.linspace(mu, big_l, d) if d > 1 else np.array([(mu + big_l) / 2])
    elif spectrum == "log":
        lo = max(mu, 1e-6 * big_l)
        lbar = np.geomspace(lo, big_l, d) if d > 1 else np.array([big_l])
    else:
        raise ValueError(f"unknown spectrum {spectrum!r}")
    Z = _perturbation_pattern(n, d, rng) if n > 1 else np.zeros((1, d))
    c = float(np.max(np.abs(Z))) if n > 1 else 1.0
    room = np.minimum(lbar - mu, big_l - lbar) / c
    if target_delta > 0 and np.max(room) < target_delta * (1 - 1e-12):
        raise ValueError(
            f"target_delta={target_delta} not reachable with this spectrum; "
            f"max achievable is {np.max(room):.6g}"
        )
    amp = np.minimum(target_delta, np.maximum(room, 0.0))
    Q = _orthogonal(d, rng)
    target = rng.standard_normal(d)
    noise = b_scale * rng.standard_normal((n, d))
    noise -= noise.mean(axis=0)
    locals_ = []
    for i in range(n):
        eig = np.clip(lbar + amp * Z[i], mu, big_l)
        H = (Q * eig) @ Q.T
        H = 0.5 * (H + H.T)
        # b_i = H_i x_target + xi_i with centred xi, so x_target minimises f
        locals_.append(QuadraticLocal(H, H @ target + noise[i]))
    Hbar = np.mean([f.H for f in locals_], axis=0)
    bbar = np.mean([f.b for f in locals_], axis=0)
    if np.min(lbar) > 0:
        x_star = np.linalg.solve(Hbar, bbar)
    else:
        x_star = target
    objs = ObjectiveSet(locals_, mu=float(mu), big_l=float(big_l), delta=float(target_delta),
                        delta_is_exact=True, meta={"kind": "quadratic", "spectrum": spectrum})
    objs.x_star = x_star
    objs.f_star = objs.value(x_star)
    # identical Hessians can still leave ~1e-16 of rounding in the exact formula
    objs.delta = exact_delta_quadratic(objs) if target_delta > 0 else 0.0
    return objs


def make_logistic_set(features, labels, parts, reg, delta=None) -> ObjectiveSet:
    """One :class:`LogisticLocal` per index list in ``parts``.

    ``delta`` defaults to the smoothness bound, the always-valid choice;
    callers usually replace it with :func:`estimate_delta`.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    locals_ = [LogisticLocal(features[p], labels[p], reg) for p in parts]
    big_l = max(f.smoothness_bound() for f in locals_)
    return ObjectiveSet(locals_, mu=float(reg), big_l=big_l,
                        delta=big_l if delta is None else float(delta),
                        meta={"kind": "logistic"})


def attach_optimum(objs: ObjectiveSet, x0=None, gtol=1e-10) -> bool:
    """Solve the global problem centrally and store ``x_star``/``f_star``.

    Only stores the optimum if the gradient norm there is at most 1e-8.
    """
    from scipy.optimize import minimize

    x0 = np.zeros(objs.d) if x0 is None else x0
    res = minimize(objs.value, x0, jac=objs.grad, method="L-BFGS-B",
                   options={"gtol": gtol, "ftol": 0.0, "maxiter": 20000})
    x = res.x
    # polish with a few Newton-free gradient steps if L-BFGS stopped early
    step = 1.0 / objs.big_l
    for _ in range(2000):
        g = objs.grad(x)
        if np.linalg.norm(g) <= 1e-10:
            break
        x = x - step * g
    if np.linalg.norm(objs.grad(x)) <= 1e-8:
        objs.x_star = x
        objs.f_star = objs.value(x)
        return True
    return False


def make_classification(m, d, num_classes=10, seed=None, separation=1.0):
    """Gaussian-mixture features with one mean per class.

    Rows are normalised to unit length so the logistic smoothness bound is
    ``reg + 1/4``.
    """
    rng = np.random.default_rng(seed)
    means = separation * rng.standard_normal((num_classes, d))
    labels = rng.integers(0, num_classes, size=m)
    X = means[labels] + rng.standard_normal((m, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return X, labels


def binary_targets(labels) -> np.ndarray:
    """Multi-class labels to 0/1 targets by parity."""
    return (np.asarray(labels) % 2).astype(float)


# ----------------------------------------------------------------- file I/O


def load_dataset(path):
    """Read ``m d`` header then ``m`` rows of ``d`` features and an int label."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: header must be 'm d'")
        m, d = int(header[0]), int(header[1])
        data = np.loadtxt(fh, ndmin=2)
    if data.shape != (m, d + 1):
        raise ValueError(f"{path}: expected {m} rows of {d + 1} columns, got {data.shape}")
    labels = data[:, -1]
    if not np.all(labels == np.round(labels)):
        raise ValueError(f"{path}: labels must be integers")
    return data[:, :d], labels.astype(int)


def save_dataset(path, features, labels):
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    m, d = features.shape
    with open(Path(path), "w") as fh:
        fh.write(f"{m} {d}\n")
        for row, lab in zip(features, labels):
            fh.write(" ".join(repr(float(v)) for v in row) + f" {int(lab)}\n")
