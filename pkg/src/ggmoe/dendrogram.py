"""Atom dissimilarity, pairwise merging, and dendrogram construction.

A fitted measure with K atoms is collapsed one merge at a time down to a
single atom.  Each step merges the pair with the smallest dissimilarity

    d(i, j) = (pi_i pi_j / (pi_i + pi_j)) *
              ( ||c_i - c_j||^2 + ||Gamma_i - Gamma_j||_F
                + ||a_i - a_j|| + |b_i - b_j|^2 + |sigma_i - sigma_j| )

using a weighted aggregation that conserves the pair's first and second
mixture moments.  The recorded merge heights drive order selection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputFormatError
from .model import ExpertAtom, MixingMeasure


def dissimilarity(a: ExpertAtom, b: ExpertAtom) -> float:
    """Weighted parameter gap between two atoms; zero iff parameters agree."""
    if a.dim != b.dim:
        raise ValueError("atoms have different dimensions")
    prefactor = a.weight * b.weight / (a.weight + b.weight)
    gap = (
        float(np.sum((a.gate_mean - b.gate_mean) ** 2))
        + float(np.linalg.norm(a.gate_cov - b.gate_cov, "fro"))
        + float(np.linalg.norm(a.slope - b.slope))
        + (a.intercept - b.intercept) ** 2
        + abs(a.noise_var - b.noise_var)
    )
    return prefactor * gap


def argmin_pair(g: MixingMeasure) -> tuple[int, int]:
    """Index pair with the smallest dissimilarity; ties go to the
    lexicographically smallest (i, j)."""
    if g.k < 2:
        raise ValueError("need at least two atoms")
    best = (0, 1)
    best_d = math.inf
    for i in range(g.k):
        for j in range(i + 1, g.k):
            d = dissimilarity(g.atoms[i], g.atoms[j])
            if d < best_d:
                best_d = d
                best = (i, j)
    return best


def merge_atoms(a: ExpertAtom, b: ExpertAtom) -> ExpertAtom:
    """Moment-conserving aggregation of two atoms into one.

    The combined weight is the sum; gate mean and intercept are weighted
    means; gate covariance, slope, and noise variance absorb the spread of
    the merged pair so that the pair's mixture moments are conserved.
    """
    pi = a.weight + b.weight
    wa, wb = a.weight / pi, b.weight / pi
    c = wa * a.gate_mean + wb * b.gate_mean
    intercept = wa * a.intercept + wb * b.intercept
    gamma = sum(
        w * (atom.gate_cov + np.outer(atom.gate_mean - c, atom.gate_mean - c))
        for w, atom in ((wa, a), (wb, b))
    )
    slope = sum(
        w * (atom.slope + (atom.intercept - intercept) * (atom.gate_mean - c))
        for w, atom in ((wa, a), (wb, b))
    )
    noise = sum(
        w * (atom.noise_var + (atom.intercept - intercept) ** 2)
        for w, atom in ((wa, a), (wb, b))
    )
    return ExpertAtom(pi, c, 0.5 * (gamma + gamma.T), slope, intercept, noise)


def merge_pair(g: MixingMeasure, l1: int, l2: int) -> MixingMeasure:
    """Measure with atoms l1 and l2 replaced by their aggregation.

    The merged atom sits at position min(l1, l2); all other atoms keep
    their relative order.
    """
    if g.k < 2:
        raise ValueError("cannot merge within a single-atom measure")
    if l1 == l2:
        raise ValueError("indices must differ")
    for idx in (l1, l2):
        if not 0 <= idx < g.k:
            raise IndexError(f"atom index {idx} out of range for K={g.k}")
    lo, hi = min(l1, l2), max(l1, l2)
    merged = merge_atoms(g.atoms[lo], g.atoms[hi])
    atoms = list(g.atoms)
    atoms[lo] = merged
    del atoms[hi]
    return MixingMeasure(tuple(atoms))


@dataclass(frozen=True)
class MergeRecord:
    """One merge event: at `level` (atom count before the merge) the pair
    (left_idx, right_idx) is replaced by one atom at merged_idx."""

    level: int
    left_idx: int
    right_idx: int
    merged_idx: int
    height: float

    def __post_init__(self):
        if not self.left_idx < self.right_idx:
            raise ValueError("left_idx must be smaller than right_idx")
        if self.height < 0:
            raise ValueError("height must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "left_idx": self.left_idx,
            "right_idx": self.right_idx,
            "merged_idx": self.merged_idx,
            "height": self.height,
        }


@dataclass(frozen=True)
class Dendrogram:
    """Full merge sequence of a measure: levels G^(K), ..., G^(1), the
    merge records, and the heights (h^(K), ..., h^(2))."""

    levels: tuple[MixingMeasure, ...]
    merges: tuple[MergeRecord, ...]
    heights: tuple[float, ...]

    def __post_init__(self):
        k = self.levels[0].k
        if len(self.levels) != k or len(self.merges) != k - 1 or len(self.heights) != k - 1:
            raise ValueError("levels/merges/heights lengths do not form a full chain")
        for i, level in enumerate(self.levels):
            if level.k != k - i:
                raise ValueError(f"level {i} has {level.k} atoms, expected {k - i}")
        for i, rec in enumerate(self.merges):
            if rec.level != k - i:
                raise ValueError(f"merge {i} recorded at level {rec.level}, expected {k - i}")
            if rec.height != self.heights[i]:
                raise ValueError("heights do not match merge records")

    @property
    def k_max(self) -> int:
        return self.levels[0].k

    def level_measure(self, kappa: int) -> MixingMeasure:
        """The measure with exactly kappa atoms."""
        if not 1 <= kappa <= self.k_max:
            raise ValueError(f"kappa must be in [1, {self.k_max}], got {kappa}")
        return self.levels[self.k_max - kappa]

    def height_at(self, kappa: int) -> float:
        """Merge height h^(kappa): the smallest pairwise dissimilarity in the
        kappa-atom level, recorded when that level was collapsed."""
        if not 2 <= kappa <= self.k_max:
            raise ValueError(f"kappa must be in [2, {self.k_max}], got {kappa}")
        return self.heights[self.k_max - kappa]

    def to_dict(self) -> dict:
        return {
            "levels": [g.to_dict() for g in self.levels],
            "merges": [m.to_dict() for m in self.merges],
            "heights": list(self.heights),
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, payload: dict) -> "Dendrogram":
        levels = tuple(MixingMeasure.from_dict(p) for p in payload["levels"])
        merges = tuple(
            MergeRecord(
                level=int(m["level"]),
                left_idx=int(m["left_idx"]),
                right_idx=int(m["right_idx"]),
                merged_idx=int(m["merged_idx"]),
                height=float(m["height"]),
            )
            for m in payload["merges"]
        )
        return cls(levels=levels, merges=merges, heights=tuple(float(h) for h in payload["heights"]))

    @classmethod
    def from_json(cls, path: str | Path) -> "Dendrogram":
        try:
            payload = json.loads(Path(path).read_text())
            return cls.from_dict(payload)
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputFormatError(f"{path}: not a valid dendrogram JSON: {exc}") from exc


def build_dendrogram(g: MixingMeasure) -> Dendrogram:
    """Collapse g one merge at a time, always taking the least-dissimilar
    pair, recording every intermediate measure and merge height."""
    levels = [g]
    merges: list[MergeRecord] = []
    current = g
    while current.k > 1:
        i, j = argmin_pair(current)
        h = dissimilarity(current.atoms[i], current.atoms[j])
        merges.append(
            MergeRecord(level=current.k, left_idx=i, right_idx=j, merged_idx=i, height=h)
        )
        current = merge_pair(current, i, j)
        levels.append(current)
    return Dendrogram(
        levels=tuple(levels),
        merges=tuple(merges),
        heights=tuple(m.height for m in merges),
    )
