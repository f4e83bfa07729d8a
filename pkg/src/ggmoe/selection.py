"""Order selection: the dendrogram criterion and refitting baselines.

The dendrogram criterion scores each candidate order kappa by

    -(h^(kappa) + omega * lbar^(kappa))

where h^(kappa) is the merge height at the kappa-atom level and
lbar^(kappa) the average log-likelihood of the data under that level's
measure, evaluated directly on the merged measure with no refitting.  The
baselines (AIC, BIC, ICL) need one fitted model per candidate order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import xlogy

from .dendrogram import Dendrogram
from .em import FitResult
from .model import Dataset, average_log_likelihood


def default_omega(n: int) -> float:
    """Log sample size, the practical weight for the criterion."""
    if n < 2:
        raise ValueError(f"need n >= 2 for a positive weight, got {n}")
    return math.log(n)


def count_free_params(k: int, d: int) -> int:
    """Free parameters of a k-component model on d-dimensional inputs:
    k-1 weights plus per component d (gate mean) + d(d+1)/2 (gate
    covariance) + d (slope) + 1 (intercept) + 1 (noise variance)."""
    if k < 1 or d < 1:
        raise ValueError(f"need k >= 1 and d >= 1, got k={k}, d={d}")
    return (k - 1) + k * (d + d * (d + 1) // 2 + d + 2)


def dsc_values(
    heights: Sequence[float], avg_logliks: Sequence[float], omega: float
) -> np.ndarray:
    """-(h + omega * lbar) elementwise; inputs aligned by candidate order."""
    heights = np.asarray(heights, dtype=float)
    avg_logliks = np.asarray(avg_logliks, dtype=float)
    if heights.shape != avg_logliks.shape:
        raise ValueError("heights and avg_logliks must align")
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    return -(heights + omega * avg_logliks)


@dataclass(frozen=True)
class CriterionScores:
    """Dendrogram-criterion table over candidate orders (ascending)."""

    kappa: tuple[int, ...]
    dsc: tuple[float, ...]
    heights: tuple[float, ...]
    avg_loglik: tuple[float, ...]
    omega: float
    selected_k: int

    def __post_init__(self):
        lengths = {len(self.kappa), len(self.dsc), len(self.heights), len(self.avg_loglik)}
        if lengths != {len(self.kappa)}:
            raise ValueError("score columns must have equal length")
        if self.selected_k not in self.kappa:
            raise ValueError(f"selected_k={self.selected_k} not among candidates")


def dsc_select(dendro: Dendrogram, data: Dataset, omega: float | None = None) -> CriterionScores:
    """Score every dendrogram level with at least two atoms and pick the
    order minimizing the criterion; ties go to the smallest order.

    omega defaults to log N.
    """
    k_max = dendro.k_max
    if k_max < 2:
        raise ValueError("need a dendrogram with at least two atoms")
    if omega is None:
        omega = default_omega(data.n)
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    kappas = list(range(2, k_max + 1))
    heights = [dendro.height_at(kappa) for kappa in kappas]
    avg_lls = [average_log_likelihood(dendro.level_measure(kappa), data) for kappa in kappas]
    scores = dsc_values(heights, avg_lls, omega)
    selected = kappas[int(np.argmin(scores))]
    return CriterionScores(
        kappa=tuple(kappas),
        dsc=tuple(float(v) for v in scores),
        heights=tuple(heights),
        avg_loglik=tuple(avg_lls),
        omega=float(omega),
        selected_k=selected,
    )


@dataclass(frozen=True)
class CriteriaTable:
    """AIC/BIC/ICL values per candidate order (ascending) and the order
    each criterion selects (argmin, ties to the smallest order)."""

    kappa: tuple[int, ...]
    aic: tuple[float, ...]
    bic: tuple[float, ...]
    icl: tuple[float, ...]
    selected: dict[str, int]

    def __post_init__(self):
        lengths = {len(self.kappa), len(self.aic), len(self.bic), len(self.icl)}
        if lengths != {len(self.kappa)}:
            raise ValueError("criterion columns must have equal length")


def information_criteria(fits: Sequence[FitResult], data: Dataset) -> CriteriaTable:
    """AIC, BIC, and ICL for one fit per candidate order.

    The fits must cover orders 1..K with no gaps.  ICL adds twice the total
    responsibility entropy to BIC, so hard assignments leave it at BIC.
    """
    by_k = {fit.measure.k: fit for fit in fits}
    if len(by_k) != len(fits):
        raise ValueError("duplicate fits for the same order")
    k_max = max(by_k)
    missing = [k for k in range(1, k_max + 1) if k not in by_k]
    if missing:
        raise ValueError(f"missing fits for orders {missing}")
    n = data.n
    kappas, aics, bics, icls = [], [], [], []
    for k in range(1, k_max + 1):
        fit = by_k[k]
        total_ll = fit.loglik_trace[-1]
        p = count_free_params(k, fit.measure.dim)
        aic = 2.0 * p - 2.0 * total_ll
        bic = p * math.log(n) - 2.0 * total_ll
        entropy = -float(np.sum(xlogy(fit.responsibilities, fit.responsibilities)))
        icl = bic + 2.0 * entropy
        kappas.append(k)
        aics.append(aic)
        bics.append(bic)
        icls.append(icl)
    selected = {
        "aic": kappas[int(np.argmin(aics))],
        "bic": kappas[int(np.argmin(bics))],
        "icl": kappas[int(np.argmin(icls))],
    }
    return CriteriaTable(
        kappa=tuple(kappas),
        aic=tuple(aics),
        bic=tuple(bics),
        icl=tuple(icls),
        selected=selected,
    )


def write_criteria_csv(
    path: str | Path,
    scores: CriterionScores | None = None,
    table: CriteriaTable | None = None,
    comment: str | None = None,
) -> None:
    """Emit the combined criterion table as CSV.

    Columns: kappa, height, avg_loglik, dsc, aic, bic, icl.  Cells not
    computed are left empty (the order-1 row has only baseline values).
    """
    if scores is None and table is None:
        raise ValueError("nothing to write")
    kappas: set[int] = set()
    if scores is not None:
        kappas.update(scores.kappa)
    if table is not None:
        kappas.update(table.kappa)
    score_idx = {k: i for i, k in enumerate(scores.kappa)} if scores else {}
    table_idx = {k: i for i, k in enumerate(table.kappa)} if table else {}
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["kappa", "height", "avg_loglik", "dsc", "aic", "bic", "icl"])
        for k in sorted(kappas):
            row: list[str] = [str(k)]
            if k in score_idx:
                i = score_idx[k]
                row += [repr(scores.heights[i]), repr(scores.avg_loglik[i]), repr(scores.dsc[i])]
            else:
                row += ["", "", ""]
            if k in table_idx:
                i = table_idx[k]
                row += [repr(table.aic[i]), repr(table.bic[i]), repr(table.icl[i])]
            else:
                row += ["", "", ""]
            writer.writerow(row)
