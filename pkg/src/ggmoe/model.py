"""Gaussian-gated Gaussian mixture of experts: parameterization, density
evaluation, prediction, and synthetic data generation.

The joint model on (x, y) with x in R^D and scalar y is

    p(x, y) = sum_k  pi_k * N(x; c_k, Gamma_k) * N(y; a_k x + b_k, sigma_k)

where each component ("expert") carries a Gaussian gate N(c_k, Gamma_k) on
the inputs and an affine regression y | x ~ N(a_k x + b_k, sigma_k) with
noise variance sigma_k.  A model is represented as a discrete mixing
measure over expert parameter tuples; all downstream machinery (EM,
merging, loss functions) operates on these measures.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import DimensionError, InputFormatError, NumericalError

LOG_2PI = math.log(2.0 * math.pi)

# Gates with smallest eigenvalue below this fraction of the mean eigenvalue
# are rejected as numerically singular.
_EIG_FLOOR_FRACTION = 1e-12


def _as_float_array(value, shape_hint: str) -> NDArray[np.float64]:
    arr = np.array(value, dtype=float)
    arr.setflags(write=False)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{shape_hint} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class ExpertAtom:
    """One weighted expert of the mixture.

    Parameters
    ----------
    weight : float
        Mixing proportion, in (0, 1].
    gate_mean : (D,) array
        Mean of the Gaussian gate on the inputs.
    gate_cov : (D, D) array
        Covariance of the gate; symmetric positive definite.
    slope : (D,) array
        Row vector of the affine expert, contributing ``slope @ x``.
    intercept : float
        Intercept of the affine expert.
    noise_var : float
        Variance of the expert's Gaussian observation noise; positive.
    """

    weight: float
    gate_mean: NDArray[np.float64]
    gate_cov: NDArray[np.float64]
    slope: NDArray[np.float64]
    intercept: float
    noise_var: float

    def __post_init__(self):
        weight = float(self.weight)
        if 1.0 < weight <= 1.0 + 1e-9:
            weight = 1.0
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "noise_var", float(self.noise_var))
        mean = _as_float_array(self.gate_mean, "gate_mean").reshape(-1)
        cov = _as_float_array(self.gate_cov, "gate_cov")
        slope = _as_float_array(self.slope, "slope").reshape(-1)
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise DimensionError(f"gate_cov shape {cov.shape} does not match dim {d}")
        if slope.shape != (d,):
            raise DimensionError(f"slope length {slope.shape[0]} does not match dim {d}")
        asym = np.max(np.abs(cov - cov.T)) if d else 0.0
        if asym > 1e-12 * max(1.0, np.max(np.abs(cov))):
            raise ValueError(f"gate_cov is not symmetric (max asymmetry {asym:.3e})")
        cov = _as_float_array(0.5 * (cov + cov.T), "gate_cov")
        eigvals = np.linalg.eigvalsh(cov)
        if eigvals[0] <= 0 or eigvals[0] < _EIG_FLOOR_FRACTION * np.trace(cov) / d:
            raise ValueError(
                f"gate_cov is singular or near-singular (min eigenvalue {eigvals[0]:.3e})"
            )
        if not 0.0 < self.weight <= 1.0:
            raise ValueError(f"weight must be in (0, 1], got {self.weight}")
        if not self.noise_var > 0.0:
            raise ValueError(f"noise_var must be positive, got {self.noise_var}")
        mean.setflags(write=False)
        cov.setflags(write=False)
        slope.setflags(write=False)
        object.__setattr__(self, "gate_mean", mean)
        object.__setattr__(self, "gate_cov", cov)
        object.__setattr__(self, "slope", slope)

    @property
    def dim(self) -> int:
        return self.gate_mean.shape[0]

    @cached_property
    def gate_chol(self) -> NDArray[np.float64]:
        """Lower Cholesky factor of the gate covariance, computed once."""
        return np.linalg.cholesky(self.gate_cov)

    @cached_property
    def gate_log_norm(self) -> float:
        """log of the gate's normalizing constant, via the factor's log-det."""
        return -0.5 * self.dim * LOG_2PI - float(np.sum(np.log(np.diag(self.gate_chol))))

    def param_vector(self) -> NDArray[np.float64]:
        """All non-weight parameters stacked into one Euclidean vector.

        Order: gate_mean, gate_cov (row-major), slope, intercept, noise_var.
        """
        return np.concatenate(
            [
                self.gate_mean,
                self.gate_cov.ravel(),
                self.slope,
                [self.intercept, self.noise_var],
            ]
        )

    def replace(self, **changes) -> "ExpertAtom":
        fields = {
            "weight": self.weight,
            "gate_mean": self.gate_mean,
            "gate_cov": self.gate_cov,
            "slope": self.slope,
            "intercept": self.intercept,
            "noise_var": self.noise_var,
        }
        fields.update(changes)
        return ExpertAtom(**fields)

    def to_dict(self) -> dict:
        return {
            "weight": self.weight,
            "gate_mean": self.gate_mean.tolist(),
            "gate_cov": self.gate_cov.tolist(),
            "slope": self.slope.tolist(),
            "intercept": self.intercept,
            "noise_var": self.noise_var,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ExpertAtom":
        return cls(
            weight=payload["weight"],
            gate_mean=payload["gate_mean"],
            gate_cov=payload["gate_cov"],
            slope=payload["slope"],
            intercept=payload["intercept"],
            noise_var=payload["noise_var"],
        )


@dataclass(frozen=True)
class MixingMeasure:
    """Finite discrete measure over expert atoms; weights sum to one."""

    atoms: tuple[ExpertAtom, ...]

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if not atoms:
            raise ValueError("a mixing measure needs at least one atom")
        d = atoms[0].dim
        if any(a.dim != d for a in atoms):
            raise DimensionError("all atoms must share the same input dimension")
        total = math.fsum(a.weight for a in atoms)
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"atom weights sum to {total!r}, expected 1")
        object.__setattr__(self, "atoms", atoms)

    @property
    def dim(self) -> int:
        return self.atoms[0].dim

    @property
    def k(self) -> int:
        return len(self.atoms)

    @cached_property
    def weights(self) -> NDArray[np.float64]:
        w = np.array([a.weight for a in self.atoms])
        w.setflags(write=False)
        return w

    @cached_property
    def log_weights(self) -> NDArray[np.float64]:
        lw = np.log(self.weights)
        lw.setflags(write=False)
        return lw

    def permuted(self, order: Sequence[int]) -> "MixingMeasure":
        return MixingMeasure(tuple(self.atoms[i] for i in order))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "atoms": [a.to_dict() for a in self.atoms]}

    @classmethod
    def from_dict(cls, payload: dict) -> "MixingMeasure":
        measure = cls(tuple(ExpertAtom.from_dict(a) for a in payload["atoms"]))
        if "dim" in payload and int(payload["dim"]) != measure.dim:
            raise DimensionError(
                f"declared dim {payload['dim']} does not match atoms (dim {measure.dim})"
            )
        return measure

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "MixingMeasure":
        try:
            payload = json.loads(Path(path).read_text())
            return cls.from_dict(payload)
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputFormatError(f"{path}: not a valid mixing-measure JSON: {exc}") from exc


@dataclass(frozen=True)
class Dataset:
    """Covariate matrix x (N, D), response vector y (N,), optional true labels."""

    x: NDArray[np.float64]
    y: NDArray[np.float64]
    labels: NDArray[np.int64] | None = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.array(self.y, dtype=float).reshape(-1)
        if x.shape[0] != y.shape[0]:
            raise DimensionError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        if x.shape[0] < 1:
            raise ValueError("dataset needs at least one row")
        labels = self.labels
        if labels is not None:
            labels = np.array(labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != y.shape[0]:
                raise DimensionError("labels length does not match data")
            labels.setflags(write=False)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def to_csv(self, path: str | Path) -> None:
        """Write as CSV with header x_1,...,x_D,y[,z]; floats round-trip exactly."""
        header = [f"x_{j + 1}" for j in range(self.dim)] + ["y"]
        if self.labels is not None:
            header.append("z")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.n):
                row = [repr(float(v)) for v in self.x[i]] + [repr(float(self.y[i]))]
                if self.labels is not None:
                    row.append(str(int(self.labels[i])))
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path: str | Path) -> "Dataset":
        try:
            with open(path, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader)
                rows = [row for row in reader if row]
        except (OSError, StopIteration) as exc:
            raise InputFormatError(f"{path}: cannot read dataset CSV: {exc}") from exc
        has_labels = header and header[-1] == "z"
        d = len(header) - 1 - (1 if has_labels else 0)
        if d < 1 or header[:d] != [f"x_{j + 1}" for j in range(d)] or header[d] != "y":
            raise InputFormatError(f"{path}: unexpected dataset header {header}")
        x, y, z = [], [], []
        for lineno, row in enumerate(rows, start=2):
            if len(row) != len(header):
                raise InputFormatError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                x.append([float(v) for v in row[:d]])
                y.append(float(row[d]))
                if has_labels:
                    z.append(int(row[d + 1]))
            except ValueError as exc:
                raise InputFormatError(f"{path}:{lineno}: {exc}") from exc
        return cls(np.array(x), np.array(y), np.array(z) if has_labels else None)


def _check_input(g: MixingMeasure, x) -> NDArray[np.float64]:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != g.dim:
        raise DimensionError(f"input has dim {x.shape[0]}, measure has dim {g.dim}")
    return x


def component_log_scores(
    g: MixingMeasure, x: NDArray[np.float64], y: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Per-row, per-component log of  pi_k * gate_k(x) * expert_k(y | x).

    Returns an (N, K) matrix; row log-sum-exp is the joint log-density.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape[1] != g.dim:
        raise DimensionError(f"data has dim {x.shape[1]}, measure has dim {g.dim}")
    n = x.shape[0]
    scores = np.empty((n, g.k))
    for k, atom in enumerate(g.atoms):
        diff = (x - atom.gate_mean).T
        sol = solve_triangular(atom.gate_chol, diff, lower=True, check_finite=False)
        gate = atom.gate_log_norm - 0.5 * np.einsum("dn,dn->n", sol, sol)
        mean = x @ atom.slope + atom.intercept
        expert = -0.5 * (LOG_2PI + math.log(atom.noise_var)) - 0.5 * (y - mean) ** 2 / atom.noise_var
        scores[:, k] = g.log_weights[k] + gate + expert
    return scores


def log_density_joint(g: MixingMeasure, x, y: float) -> float:
    """Joint log-density log p(x, y); computed without exponentiating."""
    x = _check_input(g, x)
    scores = component_log_scores(g, x[None, :], np.array([y]))
    return float(logsumexp(scores[0]))


def density_joint(g: MixingMeasure, x, y: float) -> float:
    """Joint density p(x, y) = sum_k pi_k N(x; c_k, Gamma_k) N(y; a_k x + b_k, sigma_k)."""
    return math.exp(log_density_joint(g, x, y))


def average_log_likelihood(g: MixingMeasure, data: Dataset) -> float:
    """Average joint log-density of the data under the measure."""
    scores = component_log_scores(g, data.x, data.y)
    return float(np.mean(logsumexp(scores, axis=1)))


def gating_posterior(g: MixingMeasure, x) -> NDArray[np.float64]:
    """Posterior component probabilities given the input alone.

    Component k gets pi_k N(x; c_k, Gamma_k) normalized over components.
    """
    x = _check_input(g, x)
    logs = np.empty(g.k)
    for k, atom in enumerate(g.atoms):
        sol = solve_triangular(
            atom.gate_chol, (x - atom.gate_mean)[:, None], lower=True, check_finite=False
        )
        logs[k] = g.log_weights[k] + atom.gate_log_norm - 0.5 * float(sol.ravel() @ sol.ravel())
    total = logsumexp(logs)
    if not np.isfinite(total):
        raise NumericalError(f"all gate scores underflowed at x={x!r}")
    w = np.exp(logs - total)
    return w / w.sum()


def predict_conditional_mean(g: MixingMeasure, x) -> float:
    """Regression function E[y | x]: gating-weighted affine expert means."""
    x = _check_input(g, x)
    w = gating_posterior(g, x)
    means = np.array([a.slope @ x + a.intercept for a in g.atoms])
    return float(w @ means)


def sample_dataset(g: MixingMeasure, n: int, seed: int) -> Dataset:
    """Draw n i.i.d. rows: z ~ Categorical(weights), x ~ gate_z, y ~ expert_z(x).

    Deterministic for a given seed; labels carry the component indices.
    """
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    z = rng.choice(g.k, size=n, p=g.weights)
    eps_x = rng.standard_normal((n, g.dim))
    eps_y = rng.standard_normal(n)
    means = np.stack([a.gate_mean for a in g.atoms])
    chols = np.stack([a.gate_chol for a in g.atoms])
    slopes = np.stack([a.slope for a in g.atoms])
    intercepts = np.array([a.intercept for a in g.atoms])
    noise_sd = np.sqrt([a.noise_var for a in g.atoms])
    x = means[z] + np.einsum("nij,nj->ni", chols[z], eps_x)
    y = np.einsum("nd,nd->n", x, slopes[z]) + intercepts[z] + noise_sd[z] * eps_y
    return Dataset(x=x, y=y, labels=z)


def load_measure_or_fit(path: str | Path) -> MixingMeasure:
    """Read a measure from either a measure JSON or a fit-result JSON."""
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputFormatError(f"{path}: cannot parse JSON: {exc}") from exc
    if isinstance(payload, dict) and "measure" in payload:
        payload = payload["measure"]
    try:
        return MixingMeasure.from_dict(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputFormatError(f"{path}: no mixing measure found: {exc}") from exc
