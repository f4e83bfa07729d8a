"""Shared fixtures: the built-in truth, seeded study runs, and a terminal
summary that prints one line per acceptance check."""

from __future__ import annotations

import time

import pytest
from hypothesis import HealthCheck, settings

from ggmoe import ExperimentConfig, builtin_g0, run_convergence, run_selection

settings.register_profile(
    "suite",
    deadline=None,
    derandomize=True,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)


@pytest.fixture(scope="session")
def record():
    """Recorder for the one-line-per-check acceptance summary."""
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance summary")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def g0():
    return builtin_g0()


@pytest.fixture(scope="session")
def convergence_run(tmp_path_factory):
    """Desk-scale error-vs-sample-size study on one core; returns the rows
    and the wall time so the rate checks can also bound the runtime."""
    out_dir = tmp_path_factory.mktemp("convergence")
    cfg = ExperimentConfig(
        n_min=100,
        n_max=10_000,
        n_num=5,
        n_rep=10,
        k_fit=5,
        spread=0.02,
        tol=1e-7,
        base_seed=20260818,
        out_dir=str(out_dir),
        jobs=1,
    )
    start = time.perf_counter()
    rows = run_convergence(cfg)
    elapsed = time.perf_counter() - start
    return {"rows": rows, "elapsed": elapsed, "out_dir": out_dir, "cfg": cfg}


@pytest.fixture(scope="session")
def selection_run(tmp_path_factory):
    """Desk-scale order-selection study at a single sample size."""
    out_dir = tmp_path_factory.mktemp("selection")
    cfg = ExperimentConfig(
        n_min=5000,
        n_max=5000,
        n_num=1,
        n_rep=20,
        k_fit=10,
        spread=1e-4,
        tol=1e-5,
        base_seed=20260818,
        out_dir=str(out_dir),
        jobs=4,
    )
    rows = run_selection(cfg)
    return {"rows": rows, "out_dir": out_dir, "cfg": cfg}
