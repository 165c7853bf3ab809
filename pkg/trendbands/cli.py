"""Command-line front end.

Each subcommand reads a resolved `RunConfig` (flags over ``--config`` JSON
over defaults), writes its tables into the output directory and records a
``<subcommand>.meta.json`` sidecar from which `replay` reproduces the run.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError

from trendbands import __version__
from trendbands.bands import build_eval_sets, pointwise_band, simultaneous_band, subset_index
from trendbands.bootstrap import run_bootstrap
from trendbands.config import settings
from trendbands.database import create_db_session, create_tables
from trendbands.domain import ObservedSeries
from trendbands.estimator import (
    Estimator,
    default_grid,
    estimate_curve,
    mcv_criterion,
    mcv_select,
    observed_probability_curve,
    select_from_criteria,
)
from trendbands.exceptions import InvalidConfigError, NoSelectionError, TrendBandsError, UsageError
from trendbands.io import OutputSet, band_frame, load_series, read_metadata
from trendbands.log import configure_logging
from trendbands.schemas import BootstrapMethod, RunConfig, RunMetadata
from trendbands.services import CoverageStudyService
from trendbands.simulation import monte_carlo_coverage
from trendbands.spectral import fourier_fit, fourier_sweep, lomb_scargle

logger = logging.getLogger(__name__)

Handler = Callable[[RunConfig, OutputSet], Dict[str, Any]]
_COMMANDS: Dict[str, Handler] = {}


def command(name: str) -> Callable[[Handler], Handler]:
    def register(handler: Handler) -> Handler:
        _COMMANDS[name] = handler
        return handler

    return register


class ArgumentParser(argparse.ArgumentParser):
    """Reports bad command lines as `UsageError` instead of exiting."""

    def error(self, message: str) -> None:
        raise UsageError(f"{self.prog}: {message}")


def _column_key(value: str):
    return int(value) if value.isdigit() else value


def _parents() -> Dict[str, argparse.ArgumentParser]:
    def group() -> argparse.ArgumentParser:
        return ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)

    run = group()
    run.add_argument("--config", help="flat JSON file of RunConfig keys")
    run.add_argument("--output-dir", dest="output_dir")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--log-level", dest="log_level")

    data = group()
    data.add_argument("--input", help="CSV file with one row per period")
    data.add_argument("--delimiter")
    data.add_argument("--time-column", dest="time_column", type=_column_key)
    data.add_argument("--value-column", dest="value_column", type=_column_key)
    data.add_argument("--missing-token", dest="missing_tokens", action="append")
    data.add_argument("--date-format", dest="date_format")
    data.add_argument("--period", help="pandas period alias, e.g. D or M")
    data.add_argument("--periods-per-year", dest="periods_per_year", type=float)

    estimation = group()
    estimation.add_argument("--h", type=float, help="bandwidth on rescaled time")
    estimation.add_argument("--estimator", choices=[e.value for e in Estimator])
    estimation.add_argument("--delta", type=float, help="boundary margin of the default grid (default h)")

    selection = group()
    selection.add_argument("--k", type=int, help="MCV leave-out half width")
    selection.add_argument("--candidates", type=float, nargs="+")

    bootstrap = group()
    bootstrap.add_argument("--method", choices=[m.value for m in BootstrapMethod])
    bootstrap.add_argument("--gamma", type=float)
    bootstrap.add_argument("--theta", type=float)
    bootstrap.add_argument("--ell", type=float)
    bootstrap.add_argument("--B", type=int)
    bootstrap.add_argument("--h-tilde", dest="h_tilde", type=float)
    bootstrap.add_argument("--alpha", type=float)
    bootstrap.add_argument("--subset", choices=["all", "G", "G_sub"])

    design = group()
    for flag, dest, kind in [
        ("--n", "n", int), ("--beta1", "beta1", float), ("--beta2", "beta2", float),
        ("--lambda", "lam", float), ("--c", "c", float), ("--phi", "phi", float),
        ("--psi", "psi", float), ("--sigma", "sigma", float), ("--sigma0", "sigma0", float),
        ("--sigma-star", "sigma_star", float), ("--a", "a", float), ("--cycles", "cycles", float),
        ("--p01", "p01", float), ("--p11", "p11", float), ("--mc-reps", "mc_reps", int),
    ]:
        design.add_argument(flag, dest=dest, type=kind)
    design.add_argument("--vol", choices=["constant", "cyclical"])
    design.add_argument("--missing", choices=["none", "markov"])
    design.add_argument("--label")
    design.add_argument("--store", action="store_true", help="reuse/persist reports in the results store")

    seasonal = group()
    seasonal.add_argument("--max-M", dest="max_M", type=int)
    seasonal.add_argument("--residuals-M", dest="residuals_M", type=int)
    seasonal.add_argument("--intercept", action="store_true")

    spectrum = group()
    spectrum.add_argument("--f-min", dest="f_min", type=float)
    spectrum.add_argument("--f-max", dest="f_max", type=float)
    spectrum.add_argument("--f-step", dest="f_step", type=float)
    spectrum.add_argument("--detrend-M", dest="detrend_M", type=int)
    spectrum.add_argument("--intercept", action="store_true")

    return {
        "run": run, "data": data, "estimation": estimation, "selection": selection,
        "bootstrap": bootstrap, "design": design, "seasonal": seasonal, "spectrum": spectrum,
    }


def build_parser() -> ArgumentParser:
    parents = _parents()
    parser = ArgumentParser(prog="trendbands", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, help_text: str, *groups: str) -> ArgumentParser:
        return sub.add_parser(
            name, help=help_text, parents=[parents["run"]] + [parents[g] for g in groups],
            argument_default=argparse.SUPPRESS,
        )

    add("fit", "trend estimate on the default grid", "data", "estimation")
    add("band", "pointwise and simultaneous bootstrap bands", "data", "estimation", "bootstrap")
    add("mcv", "bandwidth selection by modified cross-validation", "data", "selection")
    add("simulate", "Monte Carlo coverage of the bands", "estimation", "bootstrap", "design")
    add("seasonal", "Fourier harmonics and information criteria", "data", "seasonal")
    add("periodogram", "Lomb-Scargle periodogram", "data", "spectrum")
    replay = add("replay", "re-run a recorded invocation from its metadata sidecar")
    replay.add_argument("metadata", help="path to a <subcommand>.meta.json file")
    add("reports", "list coverage reports in the results store")
    return parser


def _read_config_file(path: str) -> Dict[str, Any]:
    try:
        payload = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise InvalidConfigError(f"config file {path} must hold a JSON object")
    return payload


def resolve_config(flags: Dict[str, Any]) -> RunConfig:
    """CLI flags override the config file, which overrides the defaults."""
    flags = dict(flags)
    base = _read_config_file(flags.pop("config")) if "config" in flags else {}
    return RunConfig.model_validate({**base, **flags})


def _require_series(cfg: RunConfig) -> ObservedSeries:
    if cfg.input is None:
        raise UsageError("--input is required")
    return load_series(cfg.input, cfg.csv_spec(), cfg.periods_per_year)


def _require_h(cfg: RunConfig) -> float:
    if cfg.h is None:
        raise UsageError("--h is required")
    return cfg.h


def _require_years(series: ObservedSeries) -> np.ndarray:
    if series.time is None:
        raise InvalidConfigError("seasonal work needs a date column (--date-format/--period) or --periods-per-year")
    return series.time


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


@command("fit")
def run_fit(cfg: RunConfig, out: OutputSet) -> Dict[str, Any]:
    series = _require_series(cfg)
    h = _require_h(cfg)
    grid = default_grid(series.n, h if cfg.delta is None else cfg.delta)
    curve = estimate_curve(series, h, grid, cfg.estimator)
    frame = pd.DataFrame(
        {
            "tau": grid.points,
            "estimate": np.where(curve.valid, curve.estimate, np.nan),
            "valid": curve.valid,
            "observed_probability": observed_probability_curve(series, h, grid.points),
        }
    )
    if curve.slope is not None:
        frame["slope"] = np.where(curve.valid, curve.slope, np.nan)
    out.table(frame, "fit.csv", cfg.delimiter)
    return {"n": series.n, "n_observed": series.n_observed, "valid_points": int(curve.valid.sum())}


def _band_grid(cfg: RunConfig, n: int, h: float):
    if cfg.subset == "all":
        grid = default_grid(n, h if cfg.delta is None else cfg.delta)
        return grid, np.arange(len(grid))
    g_sub, g = build_eval_sets(h)
    if cfg.subset == "G":
        return g, np.arange(len(g))
    return g, subset_index(g, g_sub.points)


@command("band")
def run_band(cfg: RunConfig, out: OutputSet) -> Dict[str, Any]:
    series = _require_series(cfg)
    h = _require_h(cfg)
    boot = cfg.bootstrap_config()
    grid, subset = _band_grid(cfg, series.n, h)
    result = run_bootstrap(series, boot, grid, workers=cfg.workers)
    pointwise = pointwise_band(result.draws, result.m_hat, cfg.alpha)
    simultaneous = simultaneous_band(result.draws, result.m_hat, cfg.alpha, subset)
    out.table(band_frame(pointwise), "pointwise.csv", cfg.delimiter)
    out.table(band_frame(simultaneous), "simultaneous.csv", cfg.delimiter)
    if cfg.subset == "all" and len(grid) > 1:
        logger.warning("simultaneous band spans the whole grid; joint coverage is only calibrated on the draws")
    return {
        "h": h,
        "h_tilde": boot.h_tilde,
        "gamma": boot.effective_gamma if boot.method is not BootstrapMethod.DWB else None,
        "ell": boot.ell,
        "alpha_s": simultaneous.alpha_s,
        "achieved_coverage": simultaneous.achieved_coverage,
    }


@command("mcv")
def run_mcv(cfg: RunConfig, out: OutputSet) -> Dict[str, Any]:
    series = _require_series(cfg)
    selected = mcv_select(series, cfg.k, cfg.candidates)
    candidates = sorted(selected.criterion_by_h)
    if cfg.k == 0:
        cv = selected.criterion_by_h
    else:
        cv = {h: mcv_criterion(series, 0, h) for h in candidates}
    frame = pd.DataFrame(
        {
            "h": candidates,
            "criterion": [selected.criterion_by_h[h] for h in candidates],
            "criterion_cv": [cv[h] for h in candidates],
        }
    ).replace([np.inf, -np.inf], np.nan)
    out.table(frame, "mcv.csv", cfg.delimiter)
    try:
        selected_cv = select_from_criteria(cv, 0).selected_h
    except NoSelectionError:
        selected_cv = None
    return {
        "k": cfg.k,
        "selected_h": selected.selected_h,
        "selected_h_cv": selected_cv,
        "criterion": _finite_or_none(selected.criterion_by_h[selected.selected_h]),
    }


@command("simulate")
def run_simulate(cfg: RunConfig, out: OutputSet) -> Dict[str, Any]:
    _require_h(cfg)
    sim = cfg.simulation_config()
    reused = False
    if cfg.store:
        url = settings.database_url_for(cfg.output_dir)
        create_tables(url)
        db = create_db_session(url)
        try:
            report, reused = CoverageStudyService(db).run(sim, workers=cfg.workers)
        finally:
            db.close()
    else:
        report = monte_carlo_coverage(sim, workers=cfg.workers)
    row = {"label": sim.label, "config_hash": sim.config_hash(), **report.model_dump()}
    out.table(pd.DataFrame([row]), "coverage.csv", cfg.delimiter)
    return {"reused": reused, **row}


@command("seasonal")
def run_seasonal(cfg: RunConfig, out: OutputSet) -> Dict[str, Any]:
    series = _require_series(cfg)
    years = _require_years(series)
    table = fourier_sweep(series, years, cfg.max_M, cfg.intercept)
    out.table(pd.DataFrame(table.rows), "seasonal.csv", cfg.delimiter)

    coefficient_rows: List[Dict[str, Any]] = []
    for M in range(1, cfg.max_M + 1):
        fit = fourier_fit(series, years, M, cfg.intercept)
        for j, (a, b) in enumerate(fit.coefficients, start=1):
            row = {"M": M, "j": j, "a": a, "b": b}
            if cfg.intercept:
                row["intercept"] = fit.intercept
            coefficient_rows.append(row)
    out.table(pd.DataFrame(coefficient_rows), "coefficients.csv", cfg.delimiter)

    if cfg.residuals_M is not None:
        fit = fourier_fit(series, years, cfg.residuals_M, cfg.intercept)
        residual = fit.residual_series
        frame = pd.DataFrame(
            {
                "time": np.arange(1, series.n + 1),
                "years": years,
                "value": np.where(residual.observed, residual.values, np.nan),
            }
        )
        out.table(frame, "residuals.csv", cfg.delimiter)
    return {"best_aic": table.best_aic, "best_bic": table.best_bic, "best_mse": table.best_mse}


@command("periodogram")
def run_periodogram(cfg: RunConfig, out: OutputSet) -> Dict[str, Any]:
    series = _require_series(cfg)
    years = _require_years(series)
    if cfg.detrend_M is not None:
        series = fourier_fit(series, years, cfg.detrend_M, cfg.intercept).residual_series
    periodogram = lomb_scargle(series, years, cfg.frequencies())
    frame = pd.DataFrame({"frequency": periodogram.frequencies, "power": periodogram.power})
    out.table(frame, "periodogram.csv", cfg.delimiter)
    return {"peak_frequency": periodogram.peak_frequency, "detrend_M": cfg.detrend_M}


@command("reports")
def run_reports(cfg: RunConfig, out: OutputSet) -> Dict[str, Any]:
    url = settings.database_url_for(cfg.output_dir)
    create_tables(url)
    db = create_db_session(url)
    try:
        records = CoverageStudyService(db).list_reports(limit=10_000)
        rows = [
            {"label": r.label, "config_hash": r.config_hash, "seed": r.seed, **r.to_report().model_dump()}
            for r in records
        ]
    finally:
        db.close()
    out.table(pd.DataFrame(rows), "reports.csv", cfg.delimiter)
    return {"count": len(rows)}


def execute(name: str, cfg: RunConfig) -> OutputSet:
    """Run one subcommand and write its sidecar; partial outputs are removed on failure."""
    out = OutputSet(cfg.output_dir)
    try:
        results = _COMMANDS[name](cfg, out)
        metadata = RunMetadata(
            subcommand=name,
            version=__version__,
            seed=cfg.seed,
            config=cfg.model_dump(mode="json", by_alias=True),
            outputs=out.names(),
            results=results,
        )
        out.metadata(metadata, f"{name}.meta.json")
    except BaseException:
        out.discard()
        raise
    logger.info("%s wrote %s", name, ", ".join(out.names()))
    return out


def run_subcommand(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, run the subcommand and return the process exit status."""
    try:
        args = vars(build_parser().parse_args(argv))
        name = args.pop("command")
        args.pop("log_level", None)
        if name == "replay":
            metadata = read_metadata(args.pop("metadata"))
            flags = {k: v for k, v in args.items() if k != "config"}
            cfg = RunConfig.model_validate({**metadata.config, **flags})
            name = metadata.subcommand
        else:
            cfg = resolve_config(args)
        execute(name, cfg)
        return 0
    except SystemExit as exc:
        return int(exc.code or 0)
    except ValidationError as exc:
        logger.error("invalid configuration: %s", exc)
        return InvalidConfigError.exit_code
    except TrendBandsError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("I/O failure: %s", exc)
        return 2
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        logger.error("numeric failure: %s", exc)
        return 3


def main(argv: Optional[List[str]] = None) -> None:
    argv = sys.argv[1:] if argv is None else argv
    level = settings.LOG_LEVEL
    if "--log-level" in argv:
        position = argv.index("--log-level") + 1
        if position < len(argv):
            level = argv[position]
    configure_logging(level)
    sys.exit(run_subcommand(argv))


if __name__ == "__main__":
    main()
