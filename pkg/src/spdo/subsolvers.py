"""Inexact solvers for the per-node proximal subproblem

    F(x) = f_i(x) + <h, x> + (lam / 2) ||x - c||^2

with stopping rules that compare ||grad F|| against the displacement from
the starting point. Gradient calls are counted so the harness can report
computational complexity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

DIVERGENCE_NORM = 1e12
STOP_KINDS = (
    "inexact_pdo", "spdo", "acc_spdo",
    "experiment_pdo", "experiment_spdo", "experiment_acc",
    "exact", "max_iters",
)


class DivergenceError(FloatingPointError):
    """An iterate norm blew past ``DIVERGENCE_NORM``."""


@dataclass(frozen=True)
class ProxSubproblem:
    base: object
    linear: np.ndarray
    center: np.ndarray
    lam: float
    mu: float = 0.0
    big_l: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"prox coefficient must be > 0, got {self.lam}")

    def value(self, x):
        r = x - self.center
        return self.base.value(x) + float(self.linear @ x) + 0.5 * self.lam * float(r @ r)

    def grad_parts(self, x):
        """``(grad F(x), grad f_i(x))``; one oracle call."""
        g = self.base.grad(x)
        return g + self.linear + self.lam * (x - self.center), g

    def grad(self, x):
        return self.grad_parts(x)[0]


@dataclass(frozen=True)
class StopRule:
    kind: str
    r: int = 0
    delta: float = 0.0
    mu: float = 0.0
    lam: float = 0.0
    tol: float = 0.0
    max_iters: int = 0

    def __post_init__(self):
        if self.kind not in STOP_KINDS:
            raise ValueError(f"unknown stop rule {self.kind!r}")

    def at_round(self, r: int) -> "StopRule":
        return StopRule(self.kind, r, self.delta, self.mu, self.lam, self.tol, self.max_iters)

    def coefficient(self) -> float | None:
        """Squared-norm threshold coefficient for the ratio rules, else None."""
        k, r = self.kind, self.r
        if k == "inexact_pdo":
            return self.delta * (4 * self.delta + self.mu) / (4 * (r + 1) * (r + 2))
        if k == "spdo":
            return self.lam**2 / 10
        if k == "acc_spdo":
            return self.lam**2 / 352
        if k == "experiment_pdo":
            return self.lam * (self.lam + self.mu) / ((r + 1) * (r + 2))
        if k in ("experiment_spdo", "experiment_acc"):
            return self.lam**2
        return None


def check_stop(rule: StopRule, grad, displacement) -> bool:
    grad = np.asarray(grad, dtype=float)
    displacement = np.asarray(displacement, dtype=float)
    if grad.shape != displacement.shape:
        raise ValueError("grad and displacement must have the same shape")
    g2 = float(grad @ grad)
    if g2 == 0.0:
        return True
    if rule.kind == "exact":
        return np.sqrt(g2) <= rule.tol
    if rule.kind == "max_iters":
        return False
    return g2 <= rule.coefficient() * float(displacement @ displacement)


class InnerSolution(NamedTuple):
    x: np.ndarray
    iters: int
    grad_calls: int
    local_grad: np.ndarray  # grad f_i at x, reused by the caller
    converged: bool


def _iteration_cap(rule, max_iters):
    if rule.kind == "max_iters":
        return min(rule.max_iters, max_iters)
    return max_iters


def _done(rule, g, disp):
    # a fixed budget runs to completion even from a stationary point
    return rule.kind != "max_iters" and check_stop(rule, g, disp)


def _guard(x):
    if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
        raise DivergenceError("inner solver diverged; step size is likely too large")


def solve_gd(sub: ProxSubproblem, x0, rule: StopRule, eta: float, max_iters: int = 10_000) -> InnerSolution:
    """Fixed-step gradient descent, started and anchored at ``x0``."""
    if not eta > 0:
        raise ValueError(f"step size must be > 0, got {eta}")
    cap = _iteration_cap(rule, max_iters)
    x = np.array(x0, dtype=float)
    anchor = x.copy()
    calls = 0
    for k in range(cap + 1):
        g, lg = sub.grad_parts(x)
        calls += 1
        ok = _done(rule, g, x - anchor)
        if ok or k == cap:
            return InnerSolution(x, k, calls, lg, ok or rule.kind == "max_iters")
        x = x - eta * g
        _guard(x)
    raise AssertionError("unreachable")


def solve_agd(sub: ProxSubproblem, x0, rule: StopRule, max_iters: int = 10_000) -> InnerSolution:
    """Constant-momentum Nesterov method for the strongly convex subproblem.

    Uses step ``1 / (L + lam)`` and momentum ``(sqrt(k) - 1) / (sqrt(k) + 1)``
    with ``k = (L + lam) / (mu + lam)``. The rule is tested at the
    extrapolated point, where the gradient is already available, so each
    iteration costs exactly one oracle call.
    """
    smooth = sub.big_l + sub.lam
    kappa = smooth / (sub.mu + sub.lam)
    beta = (np.sqrt(kappa) - 1.0) / (np.sqrt(kappa) + 1.0)
    cap = _iteration_cap(rule, max_iters)
    anchor = np.array(x0, dtype=float)
    y = anchor.copy()
    x_prev = anchor.copy()
    calls = 0
    for k in range(cap + 1):
        g, lg = sub.grad_parts(y)
        calls += 1
        ok = _done(rule, g, y - anchor)
        if ok or k == cap:
            return InnerSolution(y, k, calls, lg, ok or rule.kind == "max_iters")
        x = y - g / smooth
        y = x + beta * (x - x_prev)
        x_prev = x
        _guard(y)
    raise AssertionError("unreachable")
