"""Round maps for gradient tracking and the proximal decentralized family.

Node variables are held stacked, one row per node, in :class:`NetworkState`.
Every round function is pure: it returns a new state and leaves its input
untouched. Communication is charged per gossip step, gradient calls per
node.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from spdo.gossip import GossipBatch, chebyshev_gamma, fast_gossip, multi_gossip
from spdo.problems import ObjectiveSet
from spdo.subsolvers import (
    DIVERGENCE_NORM,
    DivergenceError,
    ProxSubproblem,
    StopRule,
    solve_agd,
    solve_gd,
)
from spdo.topology import MixingMatrix

KINDS = ("gradient_tracking", "pdo", "spdo", "acc_spdo")

# default prox coefficient is factor * delta; the convex accelerated case needs a larger factor
LAMBDA_FACTOR = {"pdo": 4.0, "spdo": 20.0, "acc_spdo": 96.0, "acc_spdo_convex": 208.0}


@dataclass(frozen=True)
class AlgorithmConfig:
    kind: str
    lam: float = 1.0
    M: int = 1
    gossip: str = "plain"
    gamma: float | None = None
    inner: str = "gd"
    stop: StopRule = field(default_factory=lambda: StopRule("spdo"))
    eta: float = 0.01
    max_inner: int = 10_000
    eta_gt: float = 0.01

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown algorithm {self.kind!r}")
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if self.kind != "gradient_tracking" and not self.lam > 0:
            raise ValueError("proximal methods need lam > 0")
        if self.gossip not in ("plain", "fast"):
            raise ValueError(f"unknown gossip kind {self.gossip!r}")
        if self.inner not in ("gd", "agd"):
            raise ValueError(f"unknown inner solver {self.inner!r}")


@dataclass(frozen=True)
class AccSchedule:
    """Scalar weights ``A_r``, ``B_r`` of the accelerated method."""

    lam: float
    mu: float = 0.0
    A: float = 0.0
    B: float = 1.0
    r: int = 0


def advance_schedule(s: AccSchedule) -> tuple[AccSchedule, float]:
    """Positive root ``a`` of ``lam a^2 = (A + a) B``, then step the schedule."""
    A, B, lam = s.A, s.B, s.lam
    a = (B + np.sqrt(B * B + 4.0 * lam * A * B)) / (2.0 * lam)
    return AccSchedule(lam, s.mu, A + a, B + s.mu * a, s.r + 1), float(a)


@dataclass(frozen=True)
class NetworkState:
    """Stacked ``(n, d)`` node variables plus running counters.

    ``v`` and ``y`` are used by the stabilized methods, ``g``/``gx`` (tracked
    gradient and cached local gradient) by gradient tracking only.
    """

    x: np.ndarray
    h: np.ndarray
    v: np.ndarray | None = None
    y: np.ndarray | None = None
    g: np.ndarray | None = None
    gx: np.ndarray | None = None
    comm: int = 0
    grads: np.ndarray | None = None
    inner_iters: np.ndarray | None = None
    sched: AccSchedule | None = None
    r: int = 0

    def replace(self, **kw) -> "NetworkState":
        return dataclasses.replace(self, **kw)


def _gossip(values, mix, cfg):
    batch = GossipBatch(values)
    if cfg.gossip == "fast":
        gamma = chebyshev_gamma(mix.rho) if cfg.gamma is None else cfg.gamma
        return fast_gossip(batch, mix, cfg.M, gamma).values
    return multi_gossip(batch, mix, cfg.M).values


def init_states(objs: ObjectiveSet, x0, kind: str, diameter: int = 0, lam: float | None = None) -> NetworkState:
    """Start every node at ``x0`` with exact tracking variables.

    ``h_i = grad f(x0) - grad f_i(x0)`` is formed by a global reduction and
    charged ``diameter`` communications (nothing for gradient tracking,
    whose ``g_i = grad f_i(x0)`` is purely local).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown algorithm {kind!r}")
    n, d = objs.n, objs.d
    x0 = np.asarray(x0, dtype=float).reshape(d)
    X = np.tile(x0, (n, 1))
    G = objs.local_grads(X)
    H = G.mean(axis=0) - G
    ones = np.ones(n, dtype=int)
    zeros = np.zeros(n, dtype=int)
    if kind == "gradient_tracking":
        return NetworkState(x=X, h=H, g=G.copy(), gx=G, comm=0, grads=ones, inner_iters=zeros)
    sched = AccSchedule(lam, objs.mu) if kind == "acc_spdo" else None
    return NetworkState(x=X, h=H, v=X.copy(), y=X.copy(), comm=int(diameter), grads=ones,
                        inner_iters=zeros, sched=sched)


def _solve_all(objs, H, centers, cfg, r):
    rule = dataclasses.replace(cfg.stop, r=r, lam=cfg.lam, mu=objs.mu,
                               delta=cfg.stop.delta or objs.delta)
    xs, lgs, iters, calls = [], [], [], []
    for i, f in enumerate(objs.locals):
        sub = ProxSubproblem(f, H[i], centers[i], cfg.lam, objs.mu, objs.big_l)
        if cfg.inner == "agd":
            sol = solve_agd(sub, centers[i], rule, cfg.max_inner)
        else:
            sol = solve_gd(sub, centers[i], rule, cfg.eta, cfg.max_inner)
        xs.append(sol.x)
        lgs.append(sol.local_grad)
        iters.append(sol.iters)
        calls.append(sol.grad_calls)
    return np.stack(xs), np.stack(lgs), np.array(iters), np.array(calls)


def pdo_round(state: NetworkState, mix: MixingMatrix, cfg: AlgorithmConfig, objs: ObjectiveSet,
              r: int) -> NetworkState:
    """Prox step centred at ``x_i``, then gossip iterates and tracking terms."""
    X_half, _, iters, calls = _solve_all(objs, state.h, state.x, cfg, r)
    X_new = _gossip(X_half, mix, cfg)
    G_new = objs.local_grads(X_new)
    H_new = _gossip(state.h + G_new, mix, cfg) - G_new
    return state.replace(x=X_new, h=H_new, v=X_new, comm=state.comm + 2 * cfg.M,
                         grads=state.grads + calls + 1, inner_iters=iters, r=r + 1)


def spdo_round(state: NetworkState, mix: MixingMatrix, cfg: AlgorithmConfig, objs: ObjectiveSet,
               r: int) -> NetworkState:
    """Prox step centred at ``v_i``, closed-form stabilisation of ``v``,
    then gossip ``v`` and the tracking terms evaluated at the new ``v``."""
    mu, lam = objs.mu, cfg.lam
    X_new, LG, iters, calls = _solve_all(objs, state.h, state.v, cfg, r)
    V_half = (mu * X_new + lam * state.v - LG - state.h) / (mu + lam)
    V_new = _gossip(V_half, mix, cfg)
    G_new = objs.local_grads(V_new)
    H_new = _gossip(state.h + G_new, mix, cfg) - G_new
    return state.replace(x=X_new, v=V_new, h=H_new, comm=state.comm + 2 * cfg.M,
                         grads=state.grads + calls + 1, inner_iters=iters, r=r + 1)


def acc_spdo_round(state: NetworkState, mix: MixingMatrix, sched: AccSchedule, cfg: AlgorithmConfig,
                   objs: ObjectiveSet, r: int) -> tuple[NetworkState, AccSchedule]:
    mu = objs.mu
    new_sched, a = advance_schedule(sched)
    A_r, B_r = sched.A, sched.B
    A_next, B_next = new_sched.A, new_sched.B
    Y = (A_r * state.x + a * state.v) / A_next
    H = state.h
    comm = state.comm
    grads = state.grads
    if r >= 1:
        GY = objs.local_grads(Y)
        H = _gossip(H + GY, mix, cfg) - GY
        comm += cfg.M
        grads = grads + 1
    X_half, LG, iters, calls = _solve_all(objs, H, Y, cfg, r)
    V_half = (B_r * state.v + mu * a * X_half - a * (LG + H)) / B_next
    X_new = _gossip(X_half, mix, cfg)
    V_new = _gossip(V_half, mix, cfg)
    out = state.replace(x=X_new, v=V_new, y=Y, h=H, comm=comm + 2 * cfg.M, grads=grads + calls,
                        inner_iters=iters, sched=new_sched, r=r + 1)
    return out, new_sched


def gradient_tracking_round(state: NetworkState, mix: MixingMatrix, cfg: AlgorithmConfig,
                            objs: ObjectiveSet) -> NetworkState:
    """``x <- gossip(x - eta g)``; ``g <- gossip(g) + grad f_i(x_new) - grad f_i(x_old)``."""
    X_new = _gossip(state.x - cfg.eta_gt * state.g, mix, cfg)
    if not np.all(np.isfinite(X_new)) or np.max(np.linalg.norm(X_new, axis=1)) > DIVERGENCE_NORM:
        raise DivergenceError("gradient tracking diverged; step size is likely too large")
    GX_new = objs.local_grads(X_new)
    G_new = _gossip(state.g, mix, cfg) + GX_new - state.gx
    return state.replace(x=X_new, g=G_new, gx=GX_new,
                         comm=state.comm + 2 * cfg.M, grads=state.grads + 1,
                         inner_iters=np.zeros_like(state.grads), r=state.r + 1)


def step(state: NetworkState, mix: MixingMatrix, cfg: AlgorithmConfig, objs: ObjectiveSet) -> NetworkState:
    """Advance any algorithm by one round."""
    r = state.r
    if cfg.kind == "gradient_tracking":
        return gradient_tracking_round(state, mix, cfg, objs)
    if cfg.kind == "pdo":
        return pdo_round(state, mix, cfg, objs, r)
    if cfg.kind == "spdo":
        return spdo_round(state, mix, cfg, objs, r)
    sched = state.sched if state.sched is not None else AccSchedule(cfg.lam, objs.mu)
    if sched.lam != cfg.lam:
        sched = dataclasses.replace(sched, lam=cfg.lam)
    new, _ = acc_spdo_round(state, mix, sched, cfg, objs, r)
    return new


def run_rounds(objs: ObjectiveSet, mix: MixingMatrix, cfg: AlgorithmConfig, x0, rounds: int,
               diameter: int = 0, callback=None) -> list[NetworkState]:
    """Run ``rounds`` rounds and return the state after each (index 0 = initial)."""
    state = init_states(objs, x0, cfg.kind, diameter, lam=cfg.lam)
    states = [state]
    if callback is not None:
        callback(state)
    for _ in range(rounds):
        state = step(state, mix, cfg, objs)
        states.append(state)
        if callback is not None:
            callback(state)
    return states
