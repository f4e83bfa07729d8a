#!/usr/bin/env python3
"""Plot selection accuracy against sample size from a selection.csv.

One line per method: the proportion of replications whose selected order
equals the true order.
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
    ap.add_argument("csv_path", type=Path, help="selection.csv from exp-selection")
    ap.add_argument("--out", type=Path, default=None, help="output PNG (default: next to the CSV)")
    args = ap.parse_args()

    rows = load_rows(args.csv_path)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for method, marker in (("dsc", "o"), ("aic", "s"), ("bic", "^"), ("icl", "v")):
        by_n: dict[int, list[bool]] = {}
        for row in rows:
            if row["method"] == method and row["status"] == "ok":
                by_n.setdefault(int(row["n"]), []).append(row["correct"] == "true")
        if not by_n:
            continue
        ns = np.array(sorted(by_n), dtype=float)
        props = np.array([np.mean(by_n[int(n)]) for n in ns])
        ax.semilogx(ns, props, marker=marker, label=method)
    ax.set_xlabel("sample size n")
    ax.set_ylabel("proportion selecting the true order")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    out = args.out if args.out is not None else args.csv_path.with_suffix(".png")
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
