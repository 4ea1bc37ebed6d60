"""Run the five comparison presets on a ring of 25 nodes and plot gradient
norm against communication count.

    python scripts/compare_algorithms.py [--out results/compare]
"""

import argparse
from pathlib import Path

from spdo.harness import emit_plot, load_config, run_experiment, series_from_record

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
PRESETS = ("gradient_tracking", "pdo", "spdo", "spdo_fixed10", "acc_spdo")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/compare")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    series = []
    for name in PRESETS:
        rec = run_experiment(load_config(CONFIGS / f"compare_{name}.ini"))
        (out / f"{name}.csv").write_text(rec.csv_text)
        s = rec.summary
        print(f"{name:18s} rounds {s['rounds']:5d}  comm {s['final_comm']:5d}  grads {s['final_grads']:6d}  "
              f"grad_norm {s['final_grad_norm']:.3e}")
        series.append(series_from_record(name, rec))
    emit_plot(series, "grad_norm", out / "grad_norm.svg")
    print(f"wrote {out / 'grad_norm.svg'}")


if __name__ == "__main__":
    main()
