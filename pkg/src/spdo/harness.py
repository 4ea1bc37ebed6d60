"""Experiment configuration, runs, sweeps and SVG convergence plots.

Configs are INI files with four sections::

    [topology]   kind, n, p, seed
    [problem]    kind (quadratic | logistic | dataset) and its parameters
    [algorithm]  kind, lambda, M, gossip, gamma, inner, stop, ...
    [run]        rounds, seed, eps, early_stop, comm_budget, output
    [sweep]      axis, values   (optional; used by ``spdo sweep``)

``lambda``, ``M`` and ``gamma`` accept ``auto``, resolved from the
theoretical parameter choices once delta, L and rho are known.
"""

from __future__ import annotations

import configparser
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from spdo import algorithms as alg
from spdo import problems
from spdo.gossip import chebyshev_gamma
from spdo.metrics import RoundTelemetry, collect, rounds_to_tolerance, to_csv
from spdo.subsolvers import DivergenceError, StopRule
from spdo.topology import build_graph, metropolis_weights

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class TopologySection:
    kind: str = "ring"
    n: int = 25
    p: float | None = None
    seed: int = 0


@dataclass
class ProblemSection:
    kind: str = "quadratic"
    d: int = 20
    mu: float = 0.1
    big_l: float = 10.0
    target_delta: float = 1.0
    spectrum: str = "linear"
    b_scale: float = 1.0
    # logistic / dataset
    path: str = ""
    samples: int = 2000
    classes: int = 10
    alpha: float = 0.1
    reg: float = 0.01
    scheme: str = "class"
    delta: str = "estimate"
    delta_samples: int = 100
    seed: int = 0


@dataclass
class AlgorithmSection:
    kind: str = "spdo"
    lam: str = "auto"
    M: str = "auto"
    gossip: str = "auto"
    gamma: str = "auto"
    inner: str = "gd"
    stop: str = "auto"
    stop_tol: float = 1e-10
    stop_iters: int = 10
    eta: float = 0.01
    max_inner: int = 10_000
    eta_gt: float = 0.01


@dataclass
class RunSection:
    rounds: int = 100
    seed: int = 0
    eps: float = 1e-6
    early_stop: bool = False
    comm_budget: int = 0
    x0: str = "zeros"
    output: str = ""


@dataclass
class SweepSection:
    axis: str = ""
    values: str = ""

    def value_list(self) -> list[str]:
        return [v.strip() for v in self.values.split(",") if v.strip()]


@dataclass
class RunConfig:
    topology: TopologySection = field(default_factory=TopologySection)
    problem: ProblemSection = field(default_factory=ProblemSection)
    algorithm: AlgorithmSection = field(default_factory=AlgorithmSection)
    run: RunSection = field(default_factory=RunSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def with_value(self, key: str, value) -> "RunConfig":
        """Copy with one key replaced; ``key`` is ``section.name`` or a bare
        name that is unique across sections (``M``, ``lambda``, ``alpha``)."""
        section, name = _resolve_key(key)
        sec = getattr(self, section)
        typed = _coerce(sec, name, value)
        return dataclasses.replace(self, **{section: dataclasses.replace(sec, **{name: typed})})


@dataclass
class RunRecord:
    config: dict
    telemetry: list[RoundTelemetry]
    summary: dict
    csv_text: str = ""


# ------------------------------------------------------------------ config


_ALIASES = {"lambda": "lam", "L": "big_l", "delta_target": "target_delta"}
_SECTIONS = {
    "topology": TopologySection,
    "problem": ProblemSection,
    "algorithm": AlgorithmSection,
    "run": RunSection,
    "sweep": SweepSection,
}


def _resolve_key(key: str):
    if "." in key:
        section, name = key.split(".", 1)
        name = _ALIASES.get(name, name)
        if section not in _SECTIONS or name not in {f.name for f in dataclasses.fields(_SECTIONS[section])}:
            raise ConfigError(f"unknown config key {key!r}")
        return section, name
    name = _ALIASES.get(key, key)
    hits = [s for s, cls in _SECTIONS.items() if name in {f.name for f in dataclasses.fields(cls)}]
    if len(hits) != 1:
        raise ConfigError(f"config key {key!r} is unknown or ambiguous; use section.key")
    return hits[0], name


def _coerce(sec, name, value):
    ftype = {f.name: f.type for f in dataclasses.fields(sec)}[name]
    text = str(value).strip()
    try:
        if ftype == "int":
            return int(float(text)) if float(text).is_integer() else int(text)
        if ftype == "float":
            return float(text)
        if ftype == "float | None":
            return None if text.lower() in ("", "none") else float(text)
        if ftype == "bool":
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
    except ValueError as exc:
        raise ConfigError(f"bad value {value!r} for {name}") from exc
    return text


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    if not parser.read(path):
        raise ConfigError(f"cannot read config {path}")
    return config_from_parser(parser)


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_string(text)
    return config_from_parser(parser)


def config_from_parser(parser) -> RunConfig:
    cfg = RunConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in parser.items(section):
            cfg = cfg.with_value(f"{section}.{key}", value)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    if cfg.topology.kind not in ("ring", "complete", "grid", "erdos_renyi"):
        raise ConfigError(f"unknown topology kind {cfg.topology.kind!r}")
    if cfg.problem.kind not in ("quadratic", "logistic", "dataset"):
        raise ConfigError(f"unknown problem kind {cfg.problem.kind!r}")
    if cfg.problem.kind == "dataset" and not cfg.problem.path:
        raise ConfigError("problem.kind = dataset needs problem.path")
    if cfg.algorithm.kind not in alg.KINDS:
        raise ConfigError(f"unknown algorithm kind {cfg.algorithm.kind!r}")
    if cfg.algorithm.inner not in ("gd", "agd"):
        raise ConfigError(f"unknown inner solver {cfg.algorithm.inner!r}")
    if cfg.algorithm.gossip not in ("auto", "plain", "fast"):
        raise ConfigError(f"unknown gossip kind {cfg.algorithm.gossip!r}")
    if cfg.run.rounds < 0:
        raise ConfigError("run.rounds must be >= 0")
    if cfg.run.x0 not in ("zeros", "random"):
        raise ConfigError("run.x0 must be zeros or random")
    if cfg.sweep.axis:
        section, _ = _resolve_key(cfg.sweep.axis)
        if section == "sweep":
            raise ConfigError("cannot sweep over the sweep section itself")


def config_to_text(cfg: RunConfig) -> str:
    lines = []
    for section in _SECTIONS:
        lines.append(f"[{section}]")
        for f in dataclasses.fields(getattr(cfg, section)):
            val = getattr(getattr(cfg, section), f.name)
            key = "lambda" if f.name == "lam" else f.name
            lines.append(f"{key} = {'none' if val is None else val}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------- assembly


def build_problem(cfg: RunConfig) -> problems.ObjectiveSet:
    p, n = cfg.problem, cfg.topology.n
    if p.kind == "quadratic":
        return problems.make_quadratic_ensemble(n, p.d, p.mu, p.big_l, p.target_delta, seed=p.seed,
                                                spectrum=p.spectrum, b_scale=p.b_scale)
    if p.kind == "logistic":
        X, labels = problems.make_classification(p.samples, p.d, p.classes, seed=p.seed)
    else:
        X, labels = problems.load_dataset(p.path)
    parts = problems.dirichlet_partition(labels, n, p.alpha, seed=p.seed, scheme=p.scheme)
    objs = problems.make_logistic_set(X, problems.binary_targets(labels), parts, p.reg)
    if p.delta == "estimate":
        objs.delta = problems.estimate_delta(objs, p.delta_samples, seed=p.seed)
    elif p.delta not in ("", "bound"):
        objs.delta = float(p.delta)
    if p.reg > 0:
        problems.attach_optimum(objs)
    return objs


def resolve_parameters(cfg: RunConfig, objs, rho: float, x0) -> dict:
    """Turn ``auto`` entries into numbers using delta, L, mu and rho."""
    a = cfg.algorithm
    kind, delta, L, mu = a.kind, objs.delta, objs.big_l, objs.mu
    gossip = a.gossip if a.gossip != "auto" else ("fast" if kind == "acc_spdo" else "plain")

    if a.lam == "auto":
        if kind == "gradient_tracking":
            lam = 0.0
        else:
            if not delta > 0:
                raise ConfigError("lambda = auto needs delta > 0")
            factor = alg.LAMBDA_FACTOR["acc_spdo" if mu > 0 else "acc_spdo_convex"] if kind == "acc_spdo" \
                else alg.LAMBDA_FACTOR[kind]
            lam = factor * delta
    else:
        lam = float(a.lam)

    if a.M == "auto":
        if kind == "gradient_tracking" or rho == 0.0:
            M = 1
        else:
            if not delta > 0:
                raise ConfigError("M = auto needs delta > 0")
            if kind == "pdo":
                M = math.log(6 * L / delta) / (1 - rho)
            elif kind == "spdo":
                M = math.log(5 * L / delta) / (1 - rho)
            elif mu > 0:
                M = 4 / math.sqrt(1 - rho) * math.log(18 * L**2 * (192 * delta + mu) / (mu * delta**2))
            else:
                arg = 12 * L / delta
                if objs.x_star is not None:
                    d0 = float(np.sum((x0 - objs.x_star) ** 2))
                    arg = max(arg, 20384 * delta * d0 / cfg.run.eps)
                M = 1.5 / math.sqrt(1 - rho) * math.log(arg)
            M = max(1, math.ceil(M))
    else:
        M = int(a.M)

    if gossip == "fast":
        gamma = chebyshev_gamma(rho) if a.gamma == "auto" else float(a.gamma)
    else:
        gamma = 0.0

    stop_kind = a.stop
    if stop_kind == "auto":
        stop_kind = {"pdo": "inexact_pdo", "spdo": "spdo", "acc_spdo": "acc_spdo"}.get(kind, "spdo")
    stop = StopRule(stop_kind, tol=a.stop_tol, max_iters=a.stop_iters)
    return {"lam": lam, "M": M, "gossip": gossip, "gamma": gamma, "stop": stop}


def run_experiment(cfg: RunConfig, out_dir=None) -> RunRecord:
    """Assemble and run one configuration; deterministic given its seeds.

    Raises :class:`ConfigError` on bad configuration and
    :class:`~spdo.subsolvers.DivergenceError` (message names the round) when
    the iterates blow up.
    """
    validate(cfg)
    t = cfg.topology
    graph = build_graph(t.kind, t.n, seed=t.seed, p=t.p)
    mix = metropolis_weights(graph)
    objs = build_problem(cfg)
    rng = np.random.default_rng(cfg.run.seed)
    x0 = np.zeros(objs.d) if cfg.run.x0 == "zeros" else rng.standard_normal(objs.d)
    res = resolve_parameters(cfg, objs, mix.rho, x0)
    a = cfg.algorithm
    acfg = alg.AlgorithmConfig(
        kind=a.kind, lam=res["lam"] if a.kind != "gradient_tracking" else 1.0, M=res["M"],
        gossip=res["gossip"], gamma=res["gamma"], inner=a.inner, stop=res["stop"], eta=a.eta,
        max_inner=a.max_inner, eta_gt=a.eta_gt,
    )
    resolved = {
        "algorithm": a.kind, "lambda": res["lam"], "M": res["M"], "gossip": res["gossip"],
        "gamma": res["gamma"], "rho": mix.rho, "delta": objs.delta, "mu": objs.mu, "L": objs.big_l,
        "n": objs.n, "d": objs.d, "diameter": graph.diameter(), "stop": res["stop"].kind,
    }
    log.info("resolved parameters: %s", resolved)

    state = alg.init_states(objs, x0, a.kind, diameter=graph.diameter(), lam=acfg.lam)
    base_comm = state.comm
    telemetry = [collect(state, objs, a.kind)]
    r = 0
    while True:
        if cfg.run.comm_budget > 0:
            per_round = (3 if a.kind == "acc_spdo" and r >= 1 else 2) * acfg.M
            if state.comm - base_comm + per_round > cfg.run.comm_budget:
                break
        elif r >= cfg.run.rounds:
            break
        if cfg.run.early_stop and telemetry[-1].grad_norm <= cfg.run.eps:
            break
        try:
            state = alg.step(state, mix, acfg, objs)
        except FloatingPointError as exc:
            raise type(exc)(f"round {r}: {exc}") from exc
        r += 1
        telemetry.append(collect(state, objs, a.kind))
        if not math.isfinite(telemetry[-1].grad_norm):
            raise DivergenceError(f"round {r}: gradient norm is not finite")

    summary = {
        "rounds": r,
        "rounds_to_tolerance": rounds_to_tolerance(telemetry, "grad_norm", cfg.run.eps),
        "final_grad_norm": telemetry[-1].grad_norm,
        "final_comm": telemetry[-1].comm,
        "final_grads": telemetry[-1].grads,
    }
    text = to_csv(telemetry)
    target = out_dir or (Path(cfg.run.output).parent if cfg.run.output else None)
    if cfg.run.output or out_dir:
        name = Path(cfg.run.output).name if cfg.run.output else f"{a.kind}.csv"
        Path(target).mkdir(parents=True, exist_ok=True)
        (Path(target) / name).write_text(text)
    return RunRecord(config=resolved, telemetry=telemetry, summary=summary, csv_text=text)


def run_sweep(base: RunConfig, axis: str, values, out_dir=None) -> list[RunRecord]:
    """One run per value of ``axis``, all sharing ``base``'s seeds.

    Writes ``sweep_<axis>.csv`` (value, rounds_to_tolerance, final grad norm,
    rounds, comm) plus one telemetry CSV per value when ``out_dir`` is given.
    """
    _resolve_key(axis)
    records = []
    for v in values:
        cfg = base.with_value(axis, v)
        rec = run_experiment(cfg)
        records.append(rec)
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / f"{cfg.algorithm.kind}_{axis}_{v}.csv").write_text(rec.csv_text)
    if out_dir is not None and records:
        lines = [f"{axis},rounds_to_tolerance,final_grad_norm,rounds,comm"]
        for v, rec in zip(values, records):
            s = rec.summary
            rt = "" if s["rounds_to_tolerance"] is None else str(s["rounds_to_tolerance"])
            lines.append(f"{v},{rt},{s['final_grad_norm']:.17g},{s['rounds']},{s['final_comm']}")
        (Path(out_dir) / f"sweep_{axis}.csv").write_text("\n".join(lines) + "\n")
    return records


# -------------------------------------------------------------------- plot

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def plot_coordinates(xs, ys, box, xlim, ylim):
    """Map data to SVG pixels; y is on a log10 scale."""
    x0, y0, w, h = box
    lx = np.asarray(xs, dtype=float)
    ly = np.log10(np.asarray(ys, dtype=float))
    px = x0 + (lx - xlim[0]) / max(xlim[1] - xlim[0], 1e-300) * w
    py = y0 + h - (ly - ylim[0]) / max(ylim[1] - ylim[0], 1e-300) * h
    return px, py


def emit_plot(series, metric: str, path) -> str:
    """Write an SVG with ``metric`` (log scale) against communication count.

    ``series`` is a list of ``(label, comm_values, metric_values)``;
    non-positive or non-finite metric values are dropped.
    """
    if not series:
        raise ValueError("need at least one series to plot")
    W, H = 640, 420
    box = (70.0, 20.0, 520.0, 340.0)
    cleaned = []
    for label, xs, ys in series:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        ok = np.isfinite(ys) & (ys > 0)
        cleaned.append((label, xs[ok], ys[ok]))
    allx = np.concatenate([c[1] for c in cleaned]) if cleaned else np.array([0.0])
    ally = np.concatenate([np.log10(c[2]) for c in cleaned if len(c[2])]) if any(len(c[2]) for c in cleaned) \
        else np.array([0.0])
    xlim = (float(allx.min()), float(allx.max())) if len(allx) else (0.0, 1.0)
    if xlim[0] == xlim[1]:
        xlim = (xlim[0], xlim[0] + 1.0)
    ylo, yhi = math.floor(float(ally.min())), math.ceil(float(ally.max()))
    if ylo == yhi:
        ylo, yhi = ylo - 1, yhi + 1
    ylim = (ylo, yhi)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="{box[0]}" y="{box[1]}" width="{box[2]}" height="{box[3]}" fill="none" stroke="black"/>',
    ]
    for e in range(ylo, yhi + 1):
        _, py = plot_coordinates([xlim[0]], [10.0**e], box, xlim, ylim)
        out.append(f'<text x="{box[0] - 8}" y="{py[0] + 4:.2f}" font-size="11" text-anchor="end">1e{e}</text>')
    out.append(f'<text x="{box[0] + box[2] / 2}" y="{H - 25}" font-size="12" text-anchor="middle">'
               f'communications</text>')
    out.append(f'<text x="{box[0] + box[2]}" y="{H - 25}" font-size="11" text-anchor="end">{xlim[1]:g}</text>')
    out.append(f'<text x="{box[0]}" y="{H - 25}" font-size="11">{xlim[0]:g}</text>')
    out.append(f'<text x="15" y="{box[1] + box[3] / 2}" font-size="12" '
               f'transform="rotate(-90 15 {box[1] + box[3] / 2})" text-anchor="middle">{metric}</text>')
    for k, (label, xs, ys) in enumerate(cleaned):
        color = _COLORS[k % len(_COLORS)]
        if len(xs):
            px, py = plot_coordinates(xs, ys, box, xlim, ylim)
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
            out.append(f'<polyline class="series" data-label="{label}" fill="none" stroke="{color}" '
                       f'stroke-width="1.5" points="{pts}"/>')
        ly = box[1] + 16 + 16 * k
        out.append(f'<line x1="{box[0] + box[2] - 150}" y1="{ly}" x2="{box[0] + box[2] - 130}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{box[0] + box[2] - 125}" y="{ly + 4}" font-size="11">{label}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    Path(path).write_text(text)
    return text


def series_from_record(label: str, record: RunRecord, metric: str = "grad_norm"):
    return (label, [t.comm for t in record.telemetry], [getattr(t, metric) for t in record.telemetry])
