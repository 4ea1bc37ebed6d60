"""Sweeps over the gossip count M and the prox coefficient lambda.

    python scripts/sensitivity.py [--out results/sensitivity]
"""

import argparse
from pathlib import Path

from spdo.harness import load_config, run_sweep

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/sensitivity")
    args = ap.parse_args()
    for preset in ("sensitivity_M", "sensitivity_lambda", "grid_spdo"):
        cfg = load_config(CONFIGS / f"{preset}.ini")
        axis, values = cfg.sweep.axis, cfg.sweep.value_list()
        recs = run_sweep(cfg, axis, values, out_dir=Path(args.out) / preset)
        print(f"[{preset}] {axis}: final grad norm (rounds)")
        for v, r in zip(values, recs):
            print(f"  {v:>8s}  {r.summary['final_grad_norm']:.4e}  ({r.summary['rounds']})")


if __name__ == "__main__":
    main()
