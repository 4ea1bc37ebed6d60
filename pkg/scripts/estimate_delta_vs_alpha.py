"""Estimated similarity constant of the partitioned logistic task for each
Dirichlet alpha, averaged over seeds.

    python scripts/estimate_delta_vs_alpha.py [--seeds 5] [--scheme node]
"""

import argparse
from pathlib import Path

import numpy as np

from spdo import problems
from spdo.harness import load_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(CONFIGS / "delta_vs_alpha.ini"))
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--scheme", choices=("class", "node"), default=None)
    args = ap.parse_args()
    cfg = load_config(args.config)
    p = cfg.problem
    X, labels = problems.make_classification(p.samples, p.d, p.classes, seed=p.seed)
    y = problems.binary_targets(labels)
    scheme = args.scheme or p.scheme
    print(f"alpha,delta_mean,delta_std  (n={cfg.topology.n}, scheme={scheme}, {args.seeds} seeds)")
    for alpha in (float(v) for v in cfg.sweep.value_list()):
        vals = []
        try:
            for seed in range(args.seeds):
                parts = problems.dirichlet_partition(labels, cfg.topology.n, alpha, seed=seed, scheme=scheme)
                objs = problems.make_logistic_set(X, y, parts, p.reg)
                vals.append(problems.estimate_delta(objs, p.delta_samples, seed=seed))
        except RuntimeError as exc:
            print(f"{alpha:g},,  # {exc}")
            continue
        print(f"{alpha:g},{np.mean(vals):.4e},{np.std(vals):.2e}")


if __name__ == "__main__":
    main()
