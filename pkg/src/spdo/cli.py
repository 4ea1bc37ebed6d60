"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from spdo import harness, problems
from spdo.metrics import read_csv
from spdo.topology import build_graph, metropolis_weights

EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _cmd_run(args):
    cfg = harness.load_config(args.config)
    rec = harness.run_experiment(cfg, out_dir=args.out)
    for k, v in rec.config.items():
        print(f"{k} = {v}")
    for k, v in rec.summary.items():
        print(f"{k} = {v}")
    if not (args.out or cfg.run.output):
        sys.stdout.write(rec.csv_text)


def _cmd_sweep(args):
    cfg = harness.load_config(args.config)
    axis = args.axis or cfg.sweep.axis
    if not axis:
        raise harness.ConfigError("no sweep axis: pass --axis or set [sweep] axis")
    values = [v.strip() for v in args.values.split(",") if v.strip()] if args.values else cfg.sweep.value_list()
    recs = harness.run_sweep(cfg, axis, values, out_dir=args.out)
    print(f"{axis},rounds_to_tolerance,final_grad_norm,rounds,comm")
    for v, rec in zip(values, recs):
        s = rec.summary
        rt = "" if s["rounds_to_tolerance"] is None else s["rounds_to_tolerance"]
        print(f"{v},{rt},{s['final_grad_norm']:.17g},{s['rounds']},{s['final_comm']}")


def _cmd_topology(args):
    g = build_graph(args.kind, args.n, seed=args.seed, p=args.p)
    mix = metropolis_weights(g)
    print(f"n = {g.n}")
    print(f"edges = {len(g.edges)}")
    print(f"rho = {mix.rho:.12g}")


def _cmd_estimate_delta(args):
    X, labels = problems.load_dataset(args.dataset)
    parts = problems.dirichlet_partition(labels, args.nodes, args.alpha, seed=args.seed, scheme=args.scheme)
    objs = problems.make_logistic_set(X, problems.binary_targets(labels), parts, args.reg)
    delta = problems.estimate_delta(objs, args.samples, seed=args.seed)
    print(f"delta = {delta:.6g}")
    print(f"L_bound = {objs.big_l:.6g}")


def _cmd_plot(args):
    series = []
    for path in args.inputs:
        cols = read_csv(path)
        if args.metric not in cols:
            raise harness.ConfigError(f"{path} has no column {args.metric!r}")
        series.append((Path(path).stem, cols["comm"], cols[args.metric]))
    harness.emit_plot(series, args.metric, args.out)
    print(f"wrote {args.out}")


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spdo", description="Decentralized proximal optimization simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="directory for the telemetry CSV")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="run one experiment per value of a config key")
    s.add_argument("--config", required=True)
    s.add_argument("--axis", default=None, help="config key; defaults to [sweep] axis")
    s.add_argument("--values", default=None, help="comma-separated values; defaults to [sweep] values")
    s.add_argument("--out", default=None)
    s.set_defaults(func=_cmd_sweep)

    t = sub.add_parser("topology", help="graph utilities")
    tsub = t.add_subparsers(dest="action", required=True)
    ti = tsub.add_parser("inspect", help="print n, edge count and rho")
    ti.add_argument("--kind", default="ring")
    ti.add_argument("--n", type=int, required=True)
    ti.add_argument("--p", type=float, default=None)
    ti.add_argument("--seed", type=int, default=0)
    ti.set_defaults(func=_cmd_topology)

    e = sub.add_parser("estimate-delta", help="estimate the similarity constant of a partitioned dataset")
    e.add_argument("--dataset", required=True)
    e.add_argument("--alpha", type=float, required=True)
    e.add_argument("--nodes", type=int, default=25)
    e.add_argument("--samples", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--reg", type=float, default=0.01)
    e.add_argument("--scheme", choices=("class", "node"), default="class")
    e.set_defaults(func=_cmd_estimate_delta)

    pl = sub.add_parser("plot", help="plot telemetry CSVs against communication count")
    pl.add_argument("--in", dest="inputs", nargs="+", required=True)
    pl.add_argument("--metric", default="grad_norm")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=_cmd_plot)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", invalid="ignore")
    try:
        args.func(args)
    except FloatingPointError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (harness.ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
