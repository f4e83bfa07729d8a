#!/usr/bin/env python3
"""Plot mean loss against sample size from a convergence.csv.

Log-log axes, one line per estimator, fitted slope in the legend, and a
reference line proportional to n^{-1/2}.
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def load_rows(path: Path) -> list[dict]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv_path", type=Path, help="convergence.csv from exp-convergence")
    ap.add_argument("--out", type=Path, default=None, help="output PNG (default: next to the CSV)")
    args = ap.parse_args()

    rows = load_rows(args.csv_path)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ref_drawn = False
    for estimator, marker in (("exact", "o"), ("overfit", "s"), ("merged", "^")):
        by_n: dict[int, list[float]] = {}
        for row in rows:
            if row["estimator"] == estimator and row["status"] == "ok":
                by_n.setdefault(int(row["n"]), []).append(float(row["v_d"]))
        if len(by_n) < 2:
            continue
        ns = np.array(sorted(by_n), dtype=float)
        means = np.array([np.mean(by_n[int(n)]) for n in ns])
        slope = np.polyfit(np.log(ns), np.log(means), 1)[0]
        ax.loglog(ns, means, marker=marker, label=f"{estimator} (slope {slope:+.2f})")
        if not ref_drawn:
            ref = means[0] * np.sqrt(ns[0] / ns)
            ax.loglog(ns, ref, "k--", linewidth=0.8, label="n^{-1/2} reference")
            ref_drawn = True
    ax.set_xlabel("sample size n")
    ax.set_ylabel("mean loss")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    out = args.out if args.out is not None else args.csv_path.with_suffix(".png")
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
