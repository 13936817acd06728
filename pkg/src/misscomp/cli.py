"""Command line interface.

Subcommands: ``analyze`` runs the full pipeline on a CSV and writes a
report bundle, ``patterns`` stops after pattern tabulation, ``simulate``
runs the criterion-recovery Monte Carlo, ``guidance`` prints the
recommended retention criterion for a planned design.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, reports, retention, simulation
from .correlation import PEARSON, TETRACHORIC
from .extraction import PAF, PCA
from .indicators import build_indicators, tabulate_patterns
from .pipeline import (
    DEFAULT_SENTINELS,
    IngestError,
    PipelineError,
    RunConfig,
    analyze,
    ingest,
    write_bundle,
)


def _split_csv_list(text: str) -> list[str]:
    return [part for part in text.split(",")]


def _add_io_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="input CSV path")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--delimiter", default=",", help="field delimiter (default: ,)")
    p.add_argument(
        "--sentinels",
        default=None,
        help="comma-joined missing-value sentinels; a leading/trailing comma adds the "
        'empty string (default: "", NA, .)',
    )
    p.add_argument("--columns", default=None, help="comma-joined columns to analyze (default: all)")
    p.add_argument(
        "--drop-fully-missing",
        action="store_true",
        help="drop the all-missing pattern row and percent base",
    )
    p.add_argument(
        "--formats",
        default="csv,json",
        help="comma-joined output formats from csv,json,md (default: csv,json)",
    )


def _sentinels(args) -> tuple[str, ...]:
    if args.sentinels is None:
        return DEFAULT_SENTINELS
    return tuple(_split_csv_list(args.sentinels))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="misscomp",
        description="Reduce missing-data patterns to components and probe what drives them.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="run the full eight-step pipeline on a CSV")
    _add_io_args(pa)
    pa.add_argument("--corr", choices=[PEARSON, TETRACHORIC], default=PEARSON)
    pa.add_argument("--method", choices=[PCA, PAF], default=PCA)
    pa.add_argument(
        "--criterion",
        choices=list(retention.CRITERIA) + ["auto"],
        default=retention.PARALLEL,
        help="decisive retention criterion; all four are always reported",
    )
    pa.add_argument("--cutoff", type=float, default=0.0, help="dichotomization cutoff (default 0)")
    pa.add_argument("--pa-reps", type=int, default=retention.PA_REPS)
    pa.add_argument("--pa-percentile", type=float, default=retention.PA_PERCENTILE)
    pa.add_argument("--seed", type=int, default=None, help="seed for the permutation null")
    pa.add_argument("--strata", default=None, help="column to stratify the rerun by")
    pa.add_argument("--covariates", default=None, help="comma-joined covariate columns")
    pa.add_argument("--ipc-hint", type=int, default=None, help="items per component, for --criterion auto")
    pa.add_argument("--components-hint", type=int, default=None, help="expected components, for --criterion auto")

    pp = sub.add_parser("patterns", help="tabulate missingness patterns and stop")
    _add_io_args(pp)

    ps = sub.add_parser("simulate", help="criterion-recovery Monte Carlo")
    ps.add_argument("--full", action="store_true", help="run the full 108-cell design")
    ps.add_argument("--cell", default=None, help='comma-joined "CxI" structures, e.g. 1x5,3x10')
    ps.add_argument("--n", default="1000", help="comma-joined sample sizes")
    ps.add_argument("--pmiss", default="0.25", help="comma-joined missingness rates")
    ps.add_argument("--corr", choices=[PEARSON, TETRACHORIC], default=PEARSON)
    ps.add_argument("--method", choices=[PCA, PAF], default=PCA)
    ps.add_argument("--reps", type=int, default=100)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--workers", type=int, default=1)
    ps.add_argument("--out", default=".", help="output directory (default: current)")

    pg = sub.add_parser("guidance", help="which criterion to trust for a planned design")
    pg.add_argument("--n", type=int, required=True)
    pg.add_argument("--items-per-component", type=int, required=True)
    pg.add_argument("--components", type=int, required=True)
    return parser


def _cmd_analyze(args) -> int:
    config = RunConfig(
        input_path=args.input,
        output_dir=args.out,
        delimiter=args.delimiter,
        missing_sentinels=_sentinels(args),
        columns=_split_csv_list(args.columns) if args.columns else None,
        correlation_kind=args.corr,
        extraction_method=args.method,
        criterion=args.criterion,
        cutoff=args.cutoff,
        pa_reps=args.pa_reps,
        pa_percentile=args.pa_percentile,
        seed=args.seed,
        strata_column=args.strata,
        covariate_columns=_split_csv_list(args.covariates) if args.covariates else None,
        items_per_component_hint=args.ipc_hint,
        expected_components_hint=args.components_hint,
        drop_fully_missing_pattern=args.drop_fully_missing,
        output_formats=tuple(_split_csv_list(args.formats)),
    )
    result = analyze(config)
    files = write_bundle(result)
    for crit, dec in result.decisions.items():
        marker = " (decisive)" if crit == result.decisive else ""
        print(f"{crit}: {dec.k_retained} component(s){marker}")
    print(f"wrote {len(files)} file(s) to {config.output_dir}")
    return 0


def _cmd_patterns(args) -> int:
    formats = set(_split_csv_list(args.formats))
    data = ingest(args.input, _sentinels(args), args.delimiter)
    try:
        ind = build_indicators(data, _split_csv_list(args.columns) if args.columns else None)
    except (KeyError, ValueError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        raise PipelineError("step1-indicators", str(msg)) from exc
    table = tabulate_patterns(ind, drop_fully_missing=args.drop_fully_missing)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    if "csv" in formats:
        reports.write_patterns_csv(outdir / "patterns.csv", table)
        files.append("patterns.csv")
    if "md" in formats:
        reports.write_patterns_md(outdir / "patterns.md", table)
        files.append("patterns.md")
    if "json" in formats:
        reports.write_patterns_json(outdir / "patterns.json", table)
        files.append("patterns.json")
    manifest = {
        "schema_version": reports.SCHEMA_VERSION,
        "tool": {"name": "misscomp", "version": __version__},
        "command": "patterns",
        "config": {
            "input_path": str(args.input),
            "delimiter": args.delimiter,
            "missing_sentinels": list(_sentinels(args)),
            "columns": _split_csv_list(args.columns) if args.columns else None,
            "drop_fully_missing_pattern": bool(args.drop_fully_missing),
        },
        "data": {
            "n": data.n,
            "p": data.p,
            "indicator_columns": ind.column_names,
            "dropped_columns": [{"column": c, "reason": r} for c, r in ind.dropped_columns],
        },
        "patterns": {
            "n_observed": table.n_observed_patterns,
            "max_possible": table.max_possible,
            "n_fully_missing": table.n_fully_missing,
        },
        "files": sorted(files + ["manifest.json"]),
    }
    reports.write_manifest(outdir / "manifest.json", manifest)
    print(
        f"{table.n_observed_patterns} pattern(s) across {table.k} indicator(s); "
        f"wrote {len(files) + 1} file(s) to {args.out}"
    )
    return 0


def _parse_cells(args) -> list[simulation.SimCondition]:
    if args.full:
        return simulation.full_grid(args.corr, args.method)
    if not args.cell:
        raise PipelineError("simulate", "pass --full or at least one --cell CxI")
    structures = []
    for token in _split_csv_list(args.cell):
        parts = token.lower().split("x")
        if len(parts) != 2:
            raise PipelineError("simulate", f"bad --cell value {token!r}; expected CxI like 3x5")
        try:
            structures.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise PipelineError("simulate", f"bad --cell value {token!r}; expected integers") from None
    try:
        ns = [int(v) for v in _split_csv_list(args.n)]
        pmisses = [float(v) for v in _split_csv_list(args.pmiss)]
    except ValueError:
        raise PipelineError("simulate", "--n takes integers and --pmiss takes floats") from None
    try:
        return [
            simulation.SimCondition(c, i, n, p, args.corr, args.method)
            for c, i in structures
            for n in ns
            for p in pmisses
        ]
    except ValueError as exc:
        raise PipelineError("simulate", str(exc)) from exc


def _cmd_simulate(args) -> int:
    conditions = _parse_cells(args)
    started = time.time()
    report = simulation.run_grid(conditions, reps=args.reps, seed=args.seed, workers=args.workers)
    elapsed = time.time() - started
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    reports.write_grid_csv(outdir / "grid.csv", report)
    reports.write_aggregate_csv(outdir / "aggregate.csv", report)
    manifest = {
        "schema_version": reports.SCHEMA_VERSION,
        "tool": {"name": "misscomp", "version": __version__},
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "command": "simulate",
        "seed": args.seed,
        "config": {
            "cells": [list(c.key()) for c in conditions],
            "n_cells": len(conditions),
            "reps": args.reps,
            "workers": args.workers,
            "corr": args.corr,
            "method": args.method,
            "full": bool(args.full),
        },
        "elapsed_seconds": round(elapsed, 3),
        "files": ["aggregate.csv", "grid.csv", "manifest.json"],
    }
    reports.write_manifest(outdir / "manifest.json", manifest)
    agg = report.aggregate()
    for crit, stats in agg.items():
        print(
            f"{crit}: mean proportion correct {stats['mean_proportion_correct']:.3f} "
            f"({stats['n_success_cells']}/{stats['n_cells']} cells at or above "
            f"{simulation.SUCCESS_THRESHOLD})"
        )
    print(f"wrote grid.csv, aggregate.csv, manifest.json to {args.out} in {elapsed:.1f}s")
    return 0


def _cmd_guidance(args) -> int:
    print(retention.guidance(args.n, args.items_per_component, args.components))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "analyze": _cmd_analyze,
        "patterns": _cmd_patterns,
        "simulate": _cmd_simulate,
        "guidance": _cmd_guidance,
    }
    try:
        return handlers[args.command](args)
    except PipelineError as exc:
        print(f"error [{exc.step}]: {exc}", file=sys.stderr)
        return 1
    except IngestError as exc:
        print(f"error [ingest]: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        print(f"error [{args.command}]: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
