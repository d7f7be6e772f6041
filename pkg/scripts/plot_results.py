#!/usr/bin/env python3
"""Plot the CSV outputs of the sweep-eps and manufactured modes.

Reads out/sweep_rate/rates.csv and out/manufactured/convergence.csv (produced
by scripts/run_all_modes.sh) and writes log-log figures with the fitted slopes
annotated. Pass different paths as arguments if the outputs live elsewhere.

usage: plot_results.py [rates.csv] [convergence.csv] [output.png]
"""

import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def read_rates(path):
    rows = list(csv.DictReader(open(path)))
    eps = np.array([float(r["eps"]) for r in rows])
    fun = np.array([float(r["functional"]) for r in rows])
    slope = float(rows[0]["slope_global"])
    return eps, fun, slope


def read_convergence(path):
    studies = {}
    for r in csv.DictReader(open(path)):
        studies.setdefault(r["study"], []).append(
            (float(r["parameter"]), float(r["error"]))
        )
    return {k: np.array(v).T for k, v in studies.items()}


def main():
    rates_path = Path(sys.argv[1] if len(sys.argv) > 1 else "out/sweep_rate/rates.csv")
    conv_path = Path(
        sys.argv[2] if len(sys.argv) > 2 else "out/manufactured/convergence.csv"
    )
    out_path = Path(sys.argv[3] if len(sys.argv) > 3 else "out/plots.png")

    panels = []
    if rates_path.exists():
        panels.append(("rates", rates_path))
    if conv_path.exists():
        panels.append(("convergence", conv_path))
    if not panels:
        print(f"nothing to plot: neither {rates_path} nor {conv_path} exists")
        print("run scripts/run_all_modes.sh first")
        return 1

    fig, axes = plt.subplots(1, len(panels), figsize=(6 * len(panels), 4.5))
    axes = np.atleast_1d(axes)

    for ax, (kind, path) in zip(axes, panels):
        if kind == "rates":
            eps, fun, slope = read_rates(path)
            ax.loglog(eps, fun, "o-", label=f"error functional (slope {slope:.2f})")
            ax.set_xlabel("eps")
            ax.set_ylabel("J(eps)")
            ax.set_title("regularization error vs eps")
        else:
            for name, (param, err) in read_convergence(path).items():
                order = np.polyfit(np.log(param), np.log(err), 1)[0]
                ax.loglog(param, err, "o-", label=f"{name} (order {order:.2f})")
            ax.set_xlabel("h or tau")
            ax.set_ylabel("error vs exact solution")
            ax.set_title("manufactured-solution convergence")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()

    fig.tight_layout()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120)
    print(f"wrote {out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
