"""Command-line entry point.

Subcommands: gen (sample a dataset), fit (EM on a dataset), dendro (merge a
fitted measure level by level), select (score candidate orders on a built
dendrogram), exp-convergence and exp-selection (full seeded studies).
Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .dendrogram import Dendrogram, build_dendrogram
from .em import EMConfig, FavorableInit, FromMeasureInit, RandomSubsetInit, fit_em
from .errors import GGMoEError, InputFormatError
from .experiments import (
    ExperimentConfig,
    builtin_g0,
    load_config,
    run_convergence,
    run_selection,
    selection_summary,
    slope_of_mean_loss,
)
from .model import Dataset, MixingMeasure, load_measure_or_fit, sample_dataset
from .selection import dsc_select, write_criteria_csv

logger = logging.getLogger("ggmoe")


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--out", type=Path, default=None, help="output file or directory")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(prog="ggmoe", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", parents=[common], help="sample a synthetic dataset to CSV")
    gen.add_argument("--measure", type=Path, default=None, help="measure JSON (default: built-in)")
    gen.add_argument("--n", type=int, required=True, help="number of rows")

    fit = sub.add_parser("fit", parents=[common], help="fit a model to a dataset CSV")
    fit.add_argument("--data", type=Path, required=True, help="dataset CSV")
    fit.add_argument("--k", type=int, required=True, help="number of components")
    fit.add_argument(
        "--init",
        choices=["random-subset", "favorable", "from-measure"],
        default="random-subset",
    )
    fit.add_argument("--measure", type=Path, default=None, help="reference measure JSON for favorable/from-measure init")
    fit.add_argument("--spread", type=float, default=0.02, help="favorable init perturbation scale")
    fit.add_argument("--tol", type=float, default=1e-5)
    fit.add_argument("--max-iter", type=int, default=2000)
    fit.add_argument("--cov-floor", type=float, default=1e-8)
    fit.add_argument("--resp-out", type=Path, default=None, help="also write responsibilities CSV here")

    dendro = sub.add_parser("dendro", parents=[common], help="build the merge tree of a fitted measure")
    dendro.add_argument("--measure", type=Path, required=True, help="measure or fit-result JSON")

    select = sub.add_parser("select", parents=[common], help="score candidate orders on a dendrogram")
    select.add_argument("--dendro", type=Path, required=True, help="dendrogram JSON")
    select.add_argument("--data", type=Path, required=True, help="dataset CSV")
    select.add_argument("--omega", type=float, default=None, help="criterion weight (default: log N)")

    for name, runner in (("exp-convergence", "convergence"), ("exp-selection", "selection")):
        exp = sub.add_parser(name, parents=[common], help=f"run the {runner} study")
        exp.add_argument("--config", type=Path, default=None, help="experiment config file")
        exp.add_argument("--n-min", type=int, default=None)
        exp.add_argument("--n-max", type=int, default=None)
        exp.add_argument("--n-num", type=int, default=None)
        exp.add_argument("--n-rep", type=int, default=None)
        exp.add_argument("--k-fit", type=int, default=None)
        exp.add_argument("--spread", type=float, default=None)
        exp.add_argument("--tol", type=float, default=None)
        exp.add_argument("--omega-rule", choices=["log-n", "constant"], default=None)
        exp.add_argument("--omega-value", type=float, default=None)
        exp.add_argument("--base-seed", type=int, default=None)
        exp.add_argument("--jobs", type=int, default=None)
    return parser


def _load_measure_arg(path: Path | None) -> MixingMeasure:
    return builtin_g0() if path is None else load_measure_or_fit(path)


def _cmd_gen(args) -> int:
    measure = _load_measure_arg(args.measure)
    data = sample_dataset(measure, args.n, args.seed)
    out = args.out if args.out is not None else Path("dataset.csv")
    data.to_csv(out)
    logger.info("wrote %d rows to %s", data.n, out)
    return 0


def _cmd_fit(args) -> int:
    data = Dataset.from_csv(args.data)
    if args.init == "random-subset":
        init = RandomSubsetInit()
    elif args.init == "favorable":
        init = FavorableInit(_load_measure_arg(args.measure), args.spread)
    else:
        if args.measure is None:
            raise InputFormatError("from-measure init needs --measure")
        init = FromMeasureInit(load_measure_or_fit(args.measure))
    cfg = EMConfig(
        n_components=args.k,
        tol=args.tol,
        max_iter=args.max_iter,
        cov_floor=args.cov_floor,
        init=init,
        seed=args.seed,
    )
    result = fit_em(data, cfg)
    out = args.out if args.out is not None else Path("fit.json")
    result.to_json(out)
    if args.resp_out is not None:
        result.responsibilities_to_csv(args.resp_out)
    logger.info(
        "fit k=%d: avg_loglik=%.6f converged=%s iters=%d -> %s",
        args.k,
        result.avg_loglik,
        result.converged,
        result.n_iter,
        out,
    )
    return 0


def _cmd_dendro(args) -> int:
    measure = load_measure_or_fit(args.measure)
    dendro = build_dendrogram(measure)
    out = args.out if args.out is not None else Path("dendrogram.json")
    dendro.to_json(out)
    logger.info("built %d-level dendrogram -> %s", dendro.k_max, out)
    return 0


def _cmd_select(args) -> int:
    dendro = Dendrogram.from_json(args.dendro)
    data = Dataset.from_csv(args.data)
    scores = dsc_select(dendro, data, args.omega)
    out = args.out if args.out is not None else Path("criteria.csv")
    write_criteria_csv(out, scores=scores, comment=f"omega={scores.omega!r} seed={args.seed}")
    logger.info("selected k=%d (omega=%.4f) -> %s", scores.selected_k, scores.omega, out)
    return 0


def _experiment_config(args) -> ExperimentConfig:
    overrides = {
        "n_min": args.n_min,
        "n_max": args.n_max,
        "n_num": args.n_num,
        "n_rep": args.n_rep,
        "k_fit": args.k_fit,
        "spread": args.spread,
        "tol": args.tol,
        "omega_rule": args.omega_rule,
        "omega_value": args.omega_value,
        "base_seed": args.base_seed,
        "jobs": args.jobs,
        "out_dir": str(args.out) if args.out is not None else None,
    }
    if args.config is not None:
        return load_config(args.config, overrides)
    kwargs = {k: v for k, v in overrides.items() if v is not None}
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise InputFormatError(f"invalid experiment settings: {exc}") from exc


def _cmd_exp_convergence(args) -> int:
    cfg = _experiment_config(args)
    rows = run_convergence(cfg)
    for estimator in ("exact", "overfit", "merged"):
        try:
            slope = slope_of_mean_loss(rows, estimator)
        except ValueError:
            continue
        logger.info("%s: log-log slope of mean loss = %.4f", estimator, slope)
    logger.info("wrote %d rows under %s", len(rows), cfg.out_dir)
    return 0


def _cmd_exp_selection(args) -> int:
    cfg = _experiment_config(args)
    rows = run_selection(cfg)
    for method, stats in selection_summary(rows).items():
        logger.info(
            "%s: proportion correct %.3f, mean selected k %.2f",
            method,
            stats["proportion_correct"],
            stats["mean_selected_k"],
        )
    logger.info("wrote %d rows under %s", len(rows), cfg.out_dir)
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "fit": _cmd_fit,
    "dendro": _cmd_dendro,
    "select": _cmd_select,
    "exp-convergence": _cmd_exp_convergence,
    "exp-selection": _cmd_exp_selection,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        return _COMMANDS[args.command](args)
    except (InputFormatError, ValueError, OSError) as exc:
        print(f"ggmoe {args.command}: {exc}", file=sys.stderr)
        return 1
    except GGMoEError as exc:
        print(f"ggmoe {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
