"""Seeded simulation studies: estimation error versus sample size, and
order-selection accuracy of the dendrogram criterion against refitting
baselines.

Every replication derives its own seed from the base seed and its grid
coordinates, so any subset of the grid reproduces the full run's rows and
reruns are byte-identical.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import subprocess
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dendrogram import build_dendrogram
from .em import EMConfig, FavorableInit, RandomSubsetInit, fit_em
from .errors import GGMoEError, InputFormatError
from .metrics import matched_param_errors, voronoi_loss
from .model import Dataset, ExpertAtom, MixingMeasure, sample_dataset
from .selection import default_omega, dsc_select, information_criteria

logger = logging.getLogger(__name__)

CONVERGENCE_COLUMNS = (
    "n",
    "rep",
    "estimator",
    "status",
    "converged",
    "n_iter",
    "v_d",
    "err_gate_mean",
    "err_gate_cov",
    "err_slope",
    "err_intercept",
    "err_noise_var",
)

SELECTION_COLUMNS = ("n", "rep", "method", "status", "selected_k", "correct")


def builtin_g0() -> MixingMeasure:
    """The built-in three-expert measure on scalar inputs used as the
    default simulation truth; per-atom fields are (c, Gamma, a, b, sigma)."""
    rows = [
        (0.3, -0.1, 0.04, 0.40, 0.34, 0.01),
        (0.4, 0.1, 0.02, -0.71, -0.33, 0.03),
        (0.3, 0.5, 0.01, 0.0, 0.2, 0.02),
    ]
    atoms = tuple(
        ExpertAtom(
            weight=w,
            gate_mean=np.array([c]),
            gate_cov=np.array([[gamma]]),
            slope=np.array([a]),
            intercept=b,
            noise_var=sigma,
        )
        for w, c, gamma, a, b, sigma in rows
    )
    return MixingMeasure(atoms)


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid and seeding for one study.

    Sample sizes are n_num log-spaced points between n_min and n_max; the
    criterion weight is log N ("log-n") or a fixed value ("constant").
    """

    g0: MixingMeasure = field(default_factory=builtin_g0)
    n_min: int = 100
    n_max: int = 10_000
    n_num: int = 5
    n_rep: int = 10
    k_fit: int = 5
    omega_rule: str = "log-n"
    omega_value: float | None = None
    spread: float = 0.02
    tol: float = 1e-5
    base_seed: int = 20260818
    out_dir: str = "runs"
    jobs: int = 1

    def __post_init__(self):
        if self.n_rep < 1:
            raise ValueError(f"n_rep must be >= 1, got {self.n_rep}")
        if self.n_num < 1 or self.n_min < 1 or self.n_max < self.n_min:
            raise ValueError("need n_num >= 1 and 1 <= n_min <= n_max")
        if self.n_min < 10 * self.k_fit:
            raise ValueError(
                f"n_min must be at least 10*k_fit = {10 * self.k_fit}, got {self.n_min}"
            )
        if self.k_fit < self.g0.k:
            raise ValueError(f"k_fit={self.k_fit} is below the true order {self.g0.k}")
        if self.omega_rule not in ("log-n", "constant"):
            raise ValueError(f"omega_rule must be 'log-n' or 'constant', got {self.omega_rule!r}")
        if self.omega_rule == "constant" and not (
            self.omega_value is not None and self.omega_value > 0
        ):
            raise ValueError("omega_rule 'constant' needs a positive omega_value")
        if self.base_seed < 0:
            raise ValueError("base_seed must be nonnegative")
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")
        if not self.spread > 0:
            raise ValueError(f"spread must be positive, got {self.spread}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")

    @property
    def n_grid(self) -> tuple[int, ...]:
        grid = np.logspace(np.log10(self.n_min), np.log10(self.n_max), self.n_num)
        return tuple(int(round(v)) for v in grid)

    def omega(self, n: int) -> float:
        if self.omega_rule == "constant":
            return float(self.omega_value)
        return default_omega(n)

    def to_dict(self) -> dict:
        return {
            "g0": self.g0.to_dict(),
            "n_min": self.n_min,
            "n_max": self.n_max,
            "n_num": self.n_num,
            "n_rep": self.n_rep,
            "k_fit": self.k_fit,
            "omega_rule": self.omega_rule,
            "omega_value": self.omega_value,
            "spread": self.spread,
            "tol": self.tol,
            "base_seed": self.base_seed,
        }


_CONFIG_INT_KEYS = ("n_min", "n_max", "n_num", "n_rep", "k_fit", "base_seed", "jobs")
_CONFIG_FLOAT_KEYS = ("omega_value", "spread", "tol")
_CONFIG_STR_KEYS = ("omega_rule", "out_dir", "g0")


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Read an ExperimentConfig from a key = value config file.

    Keys live in an [experiment] section and mirror the dataclass fields;
    `g0` may name a measure JSON file (resolved relative to the config).
    Entries in `overrides` (already typed) replace file values.
    """
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise InputFormatError(f"{path}: cannot parse config: {exc}") from exc
    if not parser.has_section("experiment"):
        raise InputFormatError(f"{path}: missing [experiment] section")
    kwargs: dict = {}
    for key, raw in parser.items("experiment"):
        try:
            if key in _CONFIG_INT_KEYS:
                kwargs[key] = int(raw)
            elif key in _CONFIG_FLOAT_KEYS:
                kwargs[key] = float(raw)
            elif key in _CONFIG_STR_KEYS:
                kwargs[key] = raw
            else:
                raise InputFormatError(f"{path}: unknown config key {key!r}")
        except ValueError as exc:
            raise InputFormatError(f"{path}: bad value for {key!r}: {exc}") from exc
    if "g0" in kwargs:
        g0_path = Path(path).parent / kwargs.pop("g0")
        kwargs["g0"] = MixingMeasure.from_json(g0_path)
    if overrides:
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise InputFormatError(f"{path}: invalid experiment config: {exc}") from exc


def derive_seed(base_seed: int, tag: str, n: int, rep: int) -> int:
    """Stable per-replication seed: base XOR a checksum of the coordinates."""
    return base_seed ^ zlib.crc32(f"{tag}:{n}:{rep}".encode())


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def _config_hash(cfg: ExperimentConfig) -> str:
    payload = json.dumps(cfg.to_dict(), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _comment_line(cfg: ExperimentConfig) -> str:
    return f"git={_git_describe()} config=sha256:{_config_hash(cfg)} seed={cfg.base_seed}"


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows_csv(path: str | Path, columns: tuple[str, ...], rows: list[dict], comment: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {comment}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(row.get(col)) for col in columns) + "\n")


def _map_replications(cfg: ExperimentConfig, worker) -> list[list[dict]]:
    coords = [(n, rep) for n in cfg.n_grid for rep in range(cfg.n_rep)]
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(lambda c: worker(*c), coords))
    else:
        results = [worker(n, rep) for n, rep in coords]
    return results


def _max_errors(measure: MixingMeasure, g0: MixingMeasure) -> dict[str, float | None]:
    table = matched_param_errors(measure, g0)
    out: dict[str, float | None] = {}
    for name in ("gate_mean", "gate_cov", "slope", "intercept", "noise_var"):
        out[f"err_{name}"] = max(row[name] for row in table.values()) if table else None
    return out


def _failed_rows(n: int, rep: int, names: tuple[str, ...], key: str, exc: Exception) -> list[dict]:
    status = f"failed:{type(exc).__name__}"
    logger.warning("replication n=%d rep=%d failed: %s", n, rep, exc)
    return [{"n": n, "rep": rep, key: name, "status": status} for name in names]


def run_convergence(cfg: ExperimentConfig) -> list[dict]:
    """Estimation error against the truth across the sample-size grid.

    Per replication: sample data, fit at the true order and at k_fit (both
    started near the truth), collapse the k_fit fit's dendrogram to the
    true order, and record the composite loss and worst per-parameter gaps
    for the exact, overfit, and merged estimators.  Writes convergence.csv
    under cfg.out_dir and returns the rows.
    """
    g0 = cfg.g0

    def one(n: int, rep: int) -> list[dict]:
        try:
            data = sample_dataset(g0, n, derive_seed(cfg.base_seed, "data", n, rep))
            exact = fit_em(
                data,
                EMConfig(
                    n_components=g0.k,
                    init=FavorableInit(g0, cfg.spread),
                    tol=cfg.tol,
                    seed=derive_seed(cfg.base_seed, "exact", n, rep),
                ),
            )
            over = fit_em(
                data,
                EMConfig(
                    n_components=cfg.k_fit,
                    init=FavorableInit(g0, cfg.spread),
                    tol=cfg.tol,
                    seed=derive_seed(cfg.base_seed, "overfit", n, rep),
                ),
            )
            merged = build_dendrogram(over.measure).level_measure(g0.k)
        except GGMoEError as exc:
            return _failed_rows(n, rep, ("exact", "overfit", "merged"), "estimator", exc)
        rows = []
        for name, measure, fit in (
            ("exact", exact.measure, exact),
            ("overfit", over.measure, over),
            ("merged", merged, over),
        ):
            row = {
                "n": n,
                "rep": rep,
                "estimator": name,
                "status": "ok",
                "converged": fit.converged,
                "n_iter": fit.n_iter,
                "v_d": voronoi_loss(measure, g0),
            }
            row.update(_max_errors(measure, g0))
            rows.append(row)
        logger.info("convergence n=%d rep=%d done", n, rep)
        return rows

    rows = [row for chunk in _map_replications(cfg, one) for row in chunk]
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_rows_csv(out_dir / "convergence.csv", CONVERGENCE_COLUMNS, rows, _comment_line(cfg))
    return rows


def run_selection(cfg: ExperimentConfig) -> list[dict]:
    """Order-selection accuracy across the sample-size grid.

    Per replication: one fit at k_fit, started near the truth, scored by
    the dendrogram criterion; plus one data-driven fit per order 1..k_fit
    for AIC/BIC/ICL, matching how those criteria are used in practice.
    Writes selection.csv under cfg.out_dir and returns the rows.
    """
    g0 = cfg.g0

    def one(n: int, rep: int) -> list[dict]:
        methods = ("dsc", "aic", "bic", "icl")
        try:
            data = sample_dataset(g0, n, derive_seed(cfg.base_seed, "data", n, rep))
            over = fit_em(
                data,
                EMConfig(
                    n_components=cfg.k_fit,
                    init=FavorableInit(g0, cfg.spread),
                    tol=cfg.tol,
                    seed=derive_seed(cfg.base_seed, "overfit", n, rep),
                ),
            )
            dendro = build_dendrogram(over.measure)
            scores = dsc_select(dendro, data, cfg.omega(n))
            fits = []
            for kappa in range(1, cfg.k_fit + 1):
                seed = derive_seed(cfg.base_seed, f"crit{kappa}", n, rep)
                cfg_k = EMConfig(
                    n_components=kappa, init=RandomSubsetInit(), tol=cfg.tol, seed=seed
                )
                fits.append(fit_em(data, cfg_k))
            table = information_criteria(fits, data)
        except GGMoEError as exc:
            return _failed_rows(n, rep, methods, "method", exc)
        chosen = {"dsc": scores.selected_k, **table.selected}
        rows = [
            {
                "n": n,
                "rep": rep,
                "method": method,
                "status": "ok",
                "selected_k": chosen[method],
                "correct": chosen[method] == g0.k,
            }
            for method in methods
        ]
        logger.info("selection n=%d rep=%d done", n, rep)
        return rows

    rows = [row for chunk in _map_replications(cfg, one) for row in chunk]
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_rows_csv(out_dir / "selection.csv", SELECTION_COLUMNS, rows, _comment_line(cfg))
    return rows


def slope_of_mean_loss(rows: list[dict], estimator: str) -> float:
    """Least-squares slope of log mean loss against log n for one estimator."""
    by_n: dict[int, list[float]] = {}
    for row in rows:
        if row.get("estimator") == estimator and row.get("status") == "ok":
            by_n.setdefault(row["n"], []).append(row["v_d"])
    if len(by_n) < 2:
        raise ValueError("need at least two sample sizes with successful rows")
    ns = sorted(by_n)
    log_n = np.log([float(n) for n in ns])
    log_loss = np.log([float(np.mean(by_n[n])) for n in ns])
    slope = np.polyfit(log_n, log_loss, 1)[0]
    return float(slope)


def selection_summary(rows: list[dict]) -> dict[str, dict[str, float]]:
    """Per method: proportion correct and mean selected order over ok rows."""
    out: dict[str, dict[str, float]] = {}
    for method in ("dsc", "aic", "bic", "icl"):
        picks = [row["selected_k"] for row in rows if row["method"] == method and row["status"] == "ok"]
        hits = [row["correct"] for row in rows if row["method"] == method and row["status"] == "ok"]
        if picks:
            out[method] = {
                "proportion_correct": float(np.mean(hits)),
                "mean_selected_k": float(np.mean(picks)),
            }
    return out
