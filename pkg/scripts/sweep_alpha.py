"""Gradient norm after a fixed communication budget as data heterogeneity
varies, for SPDO and gradient tracking.

    python scripts/sweep_alpha.py [--out results/alpha]
"""

import argparse
from pathlib import Path

from spdo.harness import load_config, run_sweep

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/alpha")
    args = ap.parse_args()
    base = load_config(CONFIGS / "sweep_alpha_spdo.ini")
    values = base.sweep.value_list()
    gt = load_config(CONFIGS / "compare_gradient_tracking.ini")
    print("alpha," + ",".join(f"{k}_grad_norm" for k in ("spdo", "gradient_tracking")) + ",delta")
    sp = run_sweep(base, "alpha", values, out_dir=Path(args.out) / "spdo")
    tr = run_sweep(gt, "alpha", values, out_dir=Path(args.out) / "gradient_tracking")
    for v, a, b in zip(values, sp, tr):
        print(f"{v},{a.summary['final_grad_norm']:.4e},{b.summary['final_grad_norm']:.4e},{a.config['delta']:.4e}")


if __name__ == "__main__":
    main()
