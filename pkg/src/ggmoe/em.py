"""EM fitting of a K-component model with closed-form updates.

The E-step computes responsibilities in log-space; the M-step maximizes the
complete-data likelihood componentwise: weighted Gaussian moments for the
gates and weighted least squares for the affine experts.  Initialization
strategies: a generic data-driven start, a start near a reference measure
with every reference atom seeding at least one component, and a verbatim
start from a given measure.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from numpy.typing import NDArray
from scipy.special import logsumexp

from .errors import DimensionError, NumericalError
from .model import Dataset, ExpertAtom, MixingMeasure, component_log_scores

# Component occupancy below 10 eps N triggers the starved-component policy.
_STARVED_FACTOR = 10.0
_STARVED_WEIGHT = 1e-10


@dataclass(frozen=True)
class RandomSubsetInit:
    """Start from K distinct data rows with globally pooled shape parameters."""


@dataclass(frozen=True)
class FavorableInit:
    """Start near `reference`: its atoms are perturbed at scale `spread` and
    assigned so every reference atom seeds at least one component."""

    reference: MixingMeasure
    spread: float = 0.02

    def __post_init__(self):
        if not self.spread > 0:
            raise ValueError(f"spread must be positive, got {self.spread}")


@dataclass(frozen=True)
class FromMeasureInit:
    """Start exactly at the given measure."""

    measure: MixingMeasure


InitStrategy = Union[RandomSubsetInit, FavorableInit, FromMeasureInit]


@dataclass(frozen=True)
class EMConfig:
    n_components: int
    tol: float = 1e-5
    max_iter: int = 2000
    cov_floor: float = 1e-8
    init: InitStrategy = field(default_factory=RandomSubsetInit)
    seed: int = 0

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError(f"n_components must be >= 1, got {self.n_components}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not 0.0 <= self.cov_floor < 1.0:
            raise ValueError(f"cov_floor must be in [0, 1), got {self.cov_floor}")


@dataclass(frozen=True)
class FitResult:
    """Fitted measure with its optimization trace.

    loglik_trace holds the total log-likelihood after each E-step;
    avg_loglik is the final entry divided by N; responsibilities are the
    posterior component probabilities at the returned measure.
    """

    measure: MixingMeasure
    loglik_trace: tuple[float, ...]
    avg_loglik: float
    responsibilities: NDArray[np.float64]
    n_iter: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "measure": self.measure.to_dict(),
            "loglik_trace": list(self.loglik_trace),
            "avg_loglik": self.avg_loglik,
            "n_iter": self.n_iter,
            "converged": self.converged,
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def responsibilities_to_csv(self, path: str | Path) -> None:
        k = self.responsibilities.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"tau_{j + 1}" for j in range(k)])
            for row in self.responsibilities:
                writer.writerow([repr(float(v)) for v in row])


def e_step(g: MixingMeasure, data: Dataset) -> tuple[NDArray[np.float64], float]:
    """Posterior responsibilities and the total log-likelihood.

    tau_{nk} is proportional to the k-th joint component score at row n,
    normalized per row in log-space (max-shifted, so small noise variances
    at N up to 1e5 do not underflow).
    """
    scores = component_log_scores(g, data.x, data.y)
    row_total = logsumexp(scores, axis=1)
    bad = np.flatnonzero(~np.isfinite(row_total))
    if bad.size:
        raise NumericalError(
            f"responsibilities undefined at row {bad[0]}: "
            "density underflowed to zero for every component"
        )
    resp = np.exp(scores - row_total[:, None])
    resp /= resp.sum(axis=1, keepdims=True)
    return resp, float(np.sum(row_total))


def _weighted_regression(
    x: NDArray[np.float64], y: NDArray[np.float64], tau: NDArray[np.float64]
) -> tuple[NDArray[np.float64], float]:
    """Weighted least squares of y on [x, 1]; returns (slope, intercept)."""
    sqrt_tau = np.sqrt(tau)
    design = np.hstack([x, np.ones((x.shape[0], 1))]) * sqrt_tau[:, None]
    beta, *_ = np.linalg.lstsq(design, y * sqrt_tau, rcond=None)
    return beta[:-1], float(beta[-1])


def m_step(
    data: Dataset,
    responsibilities: NDArray[np.float64],
    cov_floor: float = 1e-8,
    prev: MixingMeasure | None = None,
) -> MixingMeasure:
    """Closed-form maximizer of the complete-data likelihood.

    Per component: weight = mean responsibility; gate = weighted mean and
    covariance of x (covariance floored additively at cov_floor * trace/D);
    expert = weighted least-squares affine fit with residual variance
    floored at cov_floor times the weighted response variance.

    A component whose total responsibility falls below 10 eps N is starved:
    it keeps its previous parameters (from `prev`) at a vanishing weight,
    and all weights are renormalized.
    """
    resp = np.asarray(responsibilities, dtype=float)
    n, k = data.n, resp.shape[1]
    if resp.shape[0] != n:
        raise DimensionError(f"responsibilities have {resp.shape[0]} rows, data has {n}")
    if np.any(resp < 0) or np.max(np.abs(resp.sum(axis=1) - 1.0)) > 1e-8:
        raise ValueError("responsibility rows must be nonnegative and sum to 1")
    if prev is not None and prev.k != k:
        raise DimensionError(f"prev has {prev.k} atoms, responsibilities have {k} columns")
    x, y, d = data.x, data.y, data.dim
    occupancy = resp.sum(axis=0)
    starved_cut = _STARVED_FACTOR * np.finfo(float).eps * n

    global_cov_trace = float(np.trace(np.atleast_2d(np.cov(x.T)))) if n > 1 else 0.0
    atoms: list[ExpertAtom | None] = []
    weights = np.empty(k)
    for j in range(k):
        w_j = occupancy[j]
        if w_j < starved_cut:
            if prev is None:
                raise NumericalError(
                    f"component {j} starved (occupancy {w_j:.3e}) "
                    "and no previous parameters were provided"
                )
            atoms.append(None)
            weights[j] = _STARVED_WEIGHT / k
            continue
        tau = resp[:, j]
        c = tau @ x / w_j
        xc = x - c
        gamma = (tau[:, None] * xc).T @ xc / w_j
        gamma = 0.5 * (gamma + gamma.T)
        trace = float(np.trace(gamma))
        scale = trace if trace > 0 else (global_cov_trace if global_cov_trace > 0 else 1.0)
        gamma = gamma + (cov_floor * scale / d) * np.eye(d)
        slope, intercept = _weighted_regression(x, y, tau)
        resid = y - x @ slope - intercept
        noise = float(tau @ resid**2 / w_j)
        y_mean = float(tau @ y / w_j)
        y_var = float(tau @ (y - y_mean) ** 2 / w_j)
        noise = noise + cov_floor * (y_var if y_var > 0 else 1.0)
        atoms.append(ExpertAtom(1.0, c, gamma, slope, intercept, noise))
        weights[j] = w_j / n
    weights = weights / weights.sum()
    final = []
    for j in range(k):
        base = atoms[j] if atoms[j] is not None else prev.atoms[j]
        final.append(base.replace(weight=weights[j]))
    return MixingMeasure(tuple(final))


def init_random_subset(data: Dataset, k: int, seed: int) -> MixingMeasure:
    """Gate means from k distinct rows; pooled covariance, regression, noise."""
    if data.n < k:
        raise ValueError(f"need at least {k} rows, got {data.n}")
    rng = np.random.default_rng(seed)
    rows = rng.choice(data.n, size=k, replace=False)
    d = data.dim
    if data.n > 1:
        gamma = np.atleast_2d(np.cov(data.x.T))
        gamma = 0.5 * (gamma + gamma.T)
    else:
        gamma = np.eye(d)
    if np.trace(gamma) <= 0 or np.linalg.eigvalsh(gamma)[0] <= 1e-12 * np.trace(gamma) / d:
        gamma = gamma + max(np.trace(gamma) / d, 1.0) * 1e-6 * np.eye(d)
    slope, intercept = _weighted_regression(data.x, data.y, np.ones(data.n))
    resid = data.y - data.x @ slope - intercept
    noise = float(np.mean(resid**2))
    if noise <= 0:
        noise = 1e-8 * max(float(np.var(data.y)), 1.0)
    atoms = tuple(
        ExpertAtom(1.0 / k, data.x[i], gamma, slope, intercept, noise) for i in rows
    )
    return MixingMeasure(atoms)


def init_favorable(g0: MixingMeasure, k: int, spread: float, seed: int) -> MixingMeasure:
    """Start near g0 with every g0 atom seeding at least one component.

    [k] is partitioned into g0.k nonempty subsets; a component in subset t
    copies g0's atom t with additive Gaussian noise of scale `spread` on the
    location parameters and multiplicative log-normal noise on the scale
    parameters.  Weights are uniform.
    """
    k0 = g0.k
    if k < k0:
        raise ValueError(f"k={k} is below the reference atom count {k0}")
    if not spread > 0:
        raise ValueError(f"spread must be positive, got {spread}")
    rng = np.random.default_rng(seed)
    owner = np.empty(k, dtype=int)
    perm = rng.permutation(k)
    owner[perm[:k0]] = np.arange(k0)
    if k > k0:
        owner[perm[k0:]] = rng.integers(0, k0, size=k - k0)
    atoms = []
    for j in range(k):
        ref = g0.atoms[owner[j]]
        c = ref.gate_mean + spread * rng.standard_normal(g0.dim)
        gamma = ref.gate_cov * math.exp(spread * rng.standard_normal())
        slope = ref.slope + spread * rng.standard_normal(g0.dim)
        intercept = ref.intercept + spread * rng.standard_normal()
        noise = ref.noise_var * math.exp(spread * rng.standard_normal())
        atoms.append(ExpertAtom(1.0 / k, c, gamma, slope, intercept, noise))
    return MixingMeasure(tuple(atoms))


def _initial_measure(data: Dataset, cfg: EMConfig) -> MixingMeasure:
    init = cfg.init
    if isinstance(init, FromMeasureInit):
        if init.measure.k != cfg.n_components:
            raise ValueError(
                f"init measure has {init.measure.k} atoms, config wants {cfg.n_components}"
            )
        if init.measure.dim != data.dim:
            raise DimensionError("init measure dimension does not match data")
        return init.measure
    if isinstance(init, FavorableInit):
        return init_favorable(init.reference, cfg.n_components, init.spread, cfg.seed)
    if isinstance(init, RandomSubsetInit):
        return init_random_subset(data, cfg.n_components, cfg.seed)
    raise TypeError(f"unknown init strategy {init!r}")


def fit_em(data: Dataset, cfg: EMConfig) -> FitResult:
    """Alternate E and M steps until the relative log-likelihood change
    drops below cfg.tol or cfg.max_iter M-steps have run.

    Non-convergence is reported through the `converged` flag, not an error.
    """
    if data.n < cfg.n_components:
        raise ValueError(f"need N >= K: N={data.n}, K={cfg.n_components}")
    g = _initial_measure(data, cfg)
    if g.dim != data.dim:
        raise DimensionError("initial measure dimension does not match data")
    trace: list[float] = []
    prev_ll: float | None = None
    n_iter = 0
    converged = False
    while True:
        resp, total_ll = e_step(g, data)
        trace.append(total_ll)
        if prev_ll is not None and abs(total_ll - prev_ll) <= cfg.tol * abs(prev_ll):
            converged = True
            break
        if n_iter >= cfg.max_iter:
            break
        prev_ll = total_ll
        g = m_step(data, resp, cov_floor=cfg.cov_floor, prev=g)
        n_iter += 1
    return FitResult(
        measure=g,
        loglik_trace=tuple(trace),
        avg_loglik=trace[-1] / data.n,
        responsibilities=resp,
        n_iter=n_iter,
        converged=converged,
    )
