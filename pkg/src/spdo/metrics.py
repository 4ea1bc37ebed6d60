"""Per-round diagnostics and the CSV schema they are written with."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from spdo.problems import ObjectiveSet

CSV_FIELDS = (
    "round", "comm", "grads", "grad_norm", "subopt",
    "consensus_x", "consensus_v", "tracking_err", "inner_iters",
)


@dataclass(frozen=True)
class RoundTelemetry:
    round: int
    comm: int
    grads: int
    grad_norm: float
    subopt: float | None
    consensus_x: float
    consensus_v: float | None
    tracking_err: float
    inner_iters: int
    node_grads: tuple = ()
    node_grad_norm_mean: float = 0.0


def _consensus(X):
    return float(np.mean(np.sum((X - X.mean(axis=0)) ** 2, axis=1)))


def tracking_anchor(state, kind: str):
    """Network-average point at which ``h`` is supposed to match ``grad h_i``."""
    if kind == "spdo":
        return state.v.mean(axis=0)
    if kind == "acc_spdo":
        return state.y.mean(axis=0)
    return state.x.mean(axis=0)


def collect(state, objs: ObjectiveSet, kind: str) -> RoundTelemetry:
    """Telemetry for one state.

    ``tracking_err`` is ``mean_i ||h_i - grad h_i(anchor)||^2``. For gradient
    tracking the tracked quantity is the average gradient, so the error is
    ``mean_i ||g_i - grad f(xbar)||^2``.
    """
    xbar = state.x.mean(axis=0)
    gbar = objs.grad(xbar)
    subopt = None
    if objs.f_star is not None:
        subopt = objs.value(xbar) - objs.f_star
    if kind == "gradient_tracking":
        track = float(np.mean(np.sum((state.g - gbar) ** 2, axis=1)))
    else:
        anchor = tracking_anchor(state, kind)
        lg = objs.local_grads_at(anchor)
        true_h = lg.mean(axis=0) - lg
        track = float(np.mean(np.sum((state.h - true_h) ** 2, axis=1)))
    # per-node alternative to the averaged-iterate gradient norm
    node_norms = [float(np.linalg.norm(objs.grad(xi))) for xi in state.x]
    return RoundTelemetry(
        round=int(state.r),
        comm=int(state.comm),
        grads=int(np.max(state.grads)),
        grad_norm=float(np.linalg.norm(gbar)),
        subopt=subopt,
        consensus_x=_consensus(state.x),
        consensus_v=None if state.v is None else _consensus(state.v),
        tracking_err=track,
        inner_iters=int(np.max(state.inner_iters)) if state.inner_iters is not None else 0,
        node_grads=tuple(int(g) for g in state.grads),
        node_grad_norm_mean=float(np.mean(node_norms)),
    )


def rounds_to_tolerance(record, metric: str = "grad_norm", eps: float = 1e-6):
    """First round index whose ``metric`` is at most ``eps``; None if never."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if metric not in ("grad_norm", "subopt"):
        raise ValueError(f"unsupported metric {metric!r}")
    for t in record:
        val = getattr(t, metric)
        if val is not None and val <= eps:
            return t.round
    return None


def averaging_weights(mu: float, delta: float, rounds: int, factor: float) -> np.ndarray:
    """Geometric weights ``(1 + mu / (factor delta))^r`` for ``r < rounds``.

    ``factor`` is 4 for PDO and 20 for SPDO.
    """
    return (1.0 + mu / (factor * delta)) ** np.arange(rounds)


def weighted_average(values, mu, delta, factor) -> float:
    values = np.asarray(values, dtype=float)
    w = averaging_weights(mu, delta, len(values), factor)
    return float(np.sum(w * values) / np.sum(w))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def to_csv(record, path=None, per_node=False) -> str:
    """Serialise telemetry; returns the text and writes it if ``path`` given.

    ``per_node`` appends one ``grads_node<i>`` column per node.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(CSV_FIELDS)
    if per_node and record:
        header += [f"grads_node{i}" for i in range(len(record[0].node_grads))]
    w.writerow(header)
    for t in record:
        row = [_fmt(getattr(t, k)) for k in CSV_FIELDS]
        if per_node:
            row += [str(g) for g in t.node_grads]
        w.writerow(row)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def read_csv(path):
    """Load a telemetry CSV as a dict of column name -> float array (NaN for blanks)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = {}
    for key in rows[0].keys() if rows else CSV_FIELDS:
        cols[key] = np.array([float(r[key]) if r[key] != "" else np.nan for r in rows])
    return cols
