"""CSV ingestion and the end-to-end analysis pipeline.

The pipeline walks the eight-step procedure: indicators and patterns,
component extraction of the indicator correlations, retention, scoring and
dichotomization, then screens, logistic fits, and an optional stratified
rerun. Every step lands in the manifest as done, skipped (with reason), or
failed.
"""

from __future__ import annotations

import csv
import json
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, correlation, extraction, mechanism, reports, retention
from .correlation import PEARSON, TETRACHORIC
from .extraction import PAF, PCA
from .indicators import (
    CATEGORICAL,
    NUMERIC,
    Dataset,
    IndicatorMatrix,
    PatternTable,
    build_indicators,
    tabulate_patterns,
)
from .mechanism import LogisticFit, ScreenResult, StratumResult
from .retention import CRITERIA, RetentionDecision

NUMERIC_PARSE_FRACTION = 0.90
DEFAULT_SENTINELS = ("", "NA", ".")
FORMATS = ("csv", "json", "md")


class IngestError(ValueError):
    """The input file cannot be read as a rectangular table."""


class PipelineError(RuntimeError):
    def __init__(self, step: str, message: str):
        super().__init__(message)
        self.step = step


@dataclass
class RunConfig:
    input_path: str | Path
    output_dir: str | Path = "."
    delimiter: str = ","
    missing_sentinels: tuple[str, ...] = DEFAULT_SENTINELS
    columns: list[str] | None = None
    correlation_kind: str = PEARSON
    extraction_method: str = PCA
    criterion: str = retention.PARALLEL  # one of CRITERIA or "auto"
    cutoff: float = 0.0
    pa_reps: int = retention.PA_REPS
    pa_percentile: float = retention.PA_PERCENTILE
    seed: int | None = None
    strata_column: str | None = None
    covariate_columns: list[str] | None = None
    items_per_component_hint: int | None = None
    expected_components_hint: int | None = None
    drop_fully_missing_pattern: bool = False
    output_formats: tuple[str, ...] = ("csv", "json")

    def validate(self) -> None:
        if self.correlation_kind not in (PEARSON, TETRACHORIC):
            raise ValueError(f"unknown correlation kind {self.correlation_kind!r}")
        if self.extraction_method not in (PCA, PAF):
            raise ValueError(f"unknown extraction method {self.extraction_method!r}")
        if self.criterion != "auto" and self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        bad = set(self.output_formats) - set(FORMATS)
        if bad:
            raise ValueError(f"unknown output formats {sorted(bad)}")
        if self.criterion == "auto" and (
            self.items_per_component_hint is None or self.expected_components_hint is None
        ):
            raise ValueError(
                "criterion 'auto' needs items_per_component_hint and expected_components_hint"
            )


def _parse_number(cell: str) -> float | None:
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if np.isfinite(value) else None


def ingest(
    path: str | Path,
    sentinels: tuple[str, ...] = DEFAULT_SENTINELS,
    delimiter: str = ",",
) -> Dataset:
    """Read a delimited text file into a typed dataset.

    The first row is the header. A column is numeric when at least 90% of
    its non-missing cells parse as numbers (the stragglers become missing);
    otherwise it is categorical and cells stay strings. Cells matching a
    sentinel are missing either way.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines(), delimiter=delimiter))
    if not rows:
        raise IngestError(f"{path} is empty: no header row")
    header = [h.strip() for h in rows[0]]
    if any(not h for h in header):
        raise IngestError(f"{path}: header has an empty column name")
    if len(set(header)) != len(header):
        raise IngestError(f"{path}: duplicate column names in header")
    width = len(header)
    body = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise IngestError(
                f"{path}: row {lineno} has {len(row)} cells, header has {width}"
            )
        body.append([c.strip() for c in row])

    sentinel_set = set(sentinels)
    columns = []
    kinds = []
    for j, name in enumerate(header):
        cells = [row[j] for row in body]
        present = [c for c in cells if c not in sentinel_set]
        parsed = [_parse_number(c) for c in present]
        n_numeric = sum(v is not None for v in parsed)
        if not present or n_numeric >= NUMERIC_PARSE_FRACTION * len(present):
            col = np.array(
                [np.nan if c in sentinel_set else _parse_or_nan(c) for c in cells],
                dtype=np.float64,
            )
            columns.append(col)
            kinds.append(NUMERIC)
        else:
            col = np.array(
                [None if c in sentinel_set else c for c in cells], dtype=object
            )
            columns.append(col)
            kinds.append(CATEGORICAL)
    return Dataset(column_names=header, columns=columns, kinds=kinds)


def _parse_or_nan(cell: str) -> float:
    value = _parse_number(cell)
    return np.nan if value is None else value


@dataclass
class AnalysisResult:
    config: RunConfig
    seed: int
    data: Dataset
    ind: IndicatorMatrix
    patterns: PatternTable
    corr: correlation.CorrelationMatrix
    retention_eigenvalues: np.ndarray
    decisions: dict[str, RetentionDecision]
    decisive: str
    q: int
    solution: extraction.EigenSolution | None
    oriented_loadings: np.ndarray | None
    scores: extraction.ComponentScores | None
    screen_rows: list[tuple[str, str, ScreenResult]] = field(default_factory=list)
    logistic_rows: list[tuple[str, str, str, LogisticFit]] = field(default_factory=list)
    strata: list[StratumResult] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


def _screening_dataset(data: Dataset, ind: IndicatorMatrix, exclude: set[str]) -> Dataset:
    """Original columns (minus exclusions) plus indicators as categorical."""
    names = [n for n in data.column_names if n not in exclude]
    cols = [data.column(n) for n in names]
    kinds = [data.kind(n) for n in names]
    for j, name in enumerate(ind.column_names):
        names.append(name)
        cols.append(np.array([str(v) for v in ind.values[:, j]], dtype=object))
        kinds.append(CATEGORICAL)
    return Dataset(names, cols, kinds)


def _subset(data: Dataset, rows: np.ndarray) -> Dataset:
    return Dataset(
        column_names=list(data.column_names),
        columns=[c[rows] for c in data.columns],
        kinds=list(data.kinds),
    )


def analyze(config: RunConfig) -> AnalysisResult:
    """Run the full pipeline per the configuration.

    Raises PipelineError with the failing step's label; a retention outcome
    of zero components is not an error, the remaining steps are skipped
    with that reason.
    """
    config.validate()
    steps: list[dict] = []
    notes: list[str] = []

    def done(step, detail=""):
        steps.append({"step": step, "status": "done", "detail": detail})

    def skipped(step, reason):
        steps.append({"step": step, "status": "skipped", "detail": reason})

    seed = config.seed
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1, np.uint64)[0] % (2**31))
        notes.append("seed was not supplied; one was generated and recorded")

    # step 1: indicators and pattern tabulation
    try:
        data = ingest(config.input_path, tuple(config.missing_sentinels), config.delimiter)
    except IngestError as exc:
        raise PipelineError("step1-indicators", str(exc)) from exc
    try:
        ind = build_indicators(data, config.columns)
    except (KeyError, ValueError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        raise PipelineError("step1-indicators", str(msg)) from exc
    patterns = tabulate_patterns(ind, drop_fully_missing=config.drop_fully_missing_pattern)
    done("step1-indicators", f"{ind.k} indicator columns, {patterns.n_observed_patterns} patterns")

    if ind.k < 2:
        raise PipelineError(
            "step2-correlation",
            f"only {ind.k} indicator column(s); need at least 2 to correlate",
        )

    # step 2: correlation of indicators (repair to positive definite if needed)
    try:
        corr = (
            correlation.pearson(ind)
            if config.correlation_kind == PEARSON
            else correlation.tetrachoric(ind)
        )
    except correlation.EstimationError as exc:
        raise PipelineError("step2-correlation", str(exc)) from exc
    corr = correlation.repair_pd(corr)
    done(
        "step2-correlation",
        f"{config.correlation_kind}" + (", repaired to positive definite" if corr.pd_repaired else ""),
    )

    # step 3: retention criteria (all four, side by side)
    if config.extraction_method == PCA:
        base_solution = extraction.pca(corr)
        spectrum = base_solution.eigenvalues
    else:
        base_solution = None
        spectrum = extraction.reduced_spectrum(corr)
    decisions = {
        retention.KAISER: retention.kaiser(spectrum),
        retention.EKC: retention.ekc(spectrum, ind.n, ind.k),
        retention.PARALLEL: retention.parallel_analysis(
            ind, spectrum, reps=config.pa_reps, percentile=config.pa_percentile, seed=seed
        ),
        retention.PROFILE_LIKELIHOOD: retention.profile_likelihood(spectrum),
    }
    decisive = config.criterion
    if decisive == "auto":
        decisive = retention.guidance(
            ind.n, config.items_per_component_hint, config.expected_components_hint
        )
        notes.append(f"criterion 'auto' resolved to {decisive!r}")
    q = decisions[decisive].k_retained
    done("step3-retention", f"decisive criterion {decisive} retained {q} component(s)")

    if q == 0:
        reason = f"decisive criterion {decisive} retained 0 components"
        for step in ("step4-extraction", "step5-dichotomize", "step6-screens", "step7-logistic", "step8-strata"):
            skipped(step, reason)
        return AnalysisResult(
            config, seed, data, ind, patterns, corr, spectrum, decisions, decisive, 0,
            None, None, None, steps=steps, notes=notes,
        )

    # step 4: extract q components and score
    if config.extraction_method == PCA:
        solution = base_solution
    else:
        solution = extraction.paf(corr, q)
        if not solution.converged:
            notes.append("principal axis factoring did not converge; last iterate reported")
    oriented, _, _ = extraction.oriented_weights(solution, q)
    comp_scores = extraction.scores(ind, solution, q, cutoff=config.cutoff)
    done("step4-extraction", f"extracted {q} component(s) with {config.extraction_method}")

    # step 5: dichotomize at the cutoff (computed alongside scoring)
    n_high = [int(comp_scores.dichotomized[:, j].sum()) for j in range(q)]
    done("step5-dichotomize", f"cutoff {config.cutoff}; high-group sizes {n_high}")

    # steps 6-7 run on rows that are not missing on every indicator
    usable = ~comp_scores.fully_missing
    n_fully = int(comp_scores.fully_missing.sum())
    if n_fully:
        notes.append(f"{n_fully} fully missing row(s) excluded from screens and fits")
    exclude = {config.strata_column} if config.strata_column else set()
    screen_data_all = _screening_dataset(data, ind, exclude)
    screen_data = _subset(screen_data_all, usable)
    screen_vars = list(screen_data.column_names)

    screen_rows: list[tuple[str, str, ScreenResult]] = []
    logistic_rows: list[tuple[str, str, str, LogisticFit]] = []
    strata_results: list[StratumResult] = []
    indicator_names = list(ind.column_names)
    covariates = list(config.covariate_columns or [])
    for name in covariates:
        if name not in data.column_names:
            raise PipelineError("step7-logistic", f"covariate column {name!r} not in dataset")

    testable_components = []
    for j in range(q):
        label = f"component_{j + 1}"
        flag = comp_scores.dichotomized[usable, j].astype(int)
        if flag.min() == flag.max():
            notes.append(f"{label}: dichotomized score has a single class; screens and fits skipped")
            continue
        testable_components.append(j)
        for res in mechanism.screen(screen_data, flag, screen_vars):
            screen_rows.append((label, "", res))
    done("step6-screens", f"{len(screen_rows)} screen rows across {len(testable_components)} component(s)")

    for j in testable_components:
        label = f"component_{j + 1}"
        flag = comp_scores.dichotomized[usable, j].astype(int)
        x_ind = ind.values[usable].astype(np.float64)
        for m, ind_name in enumerate(indicator_names):
            logistic_rows.append(
                (label, "", f"simple:{ind_name}", mechanism.fit_logistic(flag, x_ind[:, [m]], [ind_name]))
            )
        logistic_rows.append(
            (label, "", "multiple", mechanism.fit_logistic(flag, x_ind, indicator_names))
        )
        if covariates:
            cov = np.column_stack([mechanism.numeric_values(data, c) for c in covariates])[usable]
            keep = np.isfinite(cov).all(axis=1)
            if keep.sum() and flag[keep].min() != flag[keep].max():
                logistic_rows.append(
                    (
                        label,
                        "",
                        "covariates",
                        mechanism.fit_logistic(flag[keep], cov[keep], covariates),
                    )
                )
            else:
                notes.append(f"{label}: covariate fit skipped (no complete rows with both classes)")
    done("step7-logistic", f"{len(logistic_rows)} fitted model(s)")

    # step 8: stratified rerun
    if config.strata_column:
        if config.strata_column not in data.column_names:
            raise PipelineError("step8-strata", f"strata column {config.strata_column!r} not in dataset")
        strata_vals = data.column(config.strata_column)[usable]
        strata_data = screen_data_all
        names = list(strata_data.column_names) + [config.strata_column]
        cols = list(strata_data.columns) + [data.column(config.strata_column)]
        kinds = list(strata_data.kinds) + [CATEGORICAL if data.kind(config.strata_column) == CATEGORICAL else NUMERIC]
        full = _subset(Dataset(names, cols, kinds), usable)
        for j in testable_components:
            label = f"component_{j + 1}"
            flag = comp_scores.dichotomized[usable, j].astype(int)
            for res in mechanism.stratified_rerun(
                full, flag, config.strata_column, screen_vars, indicator_names
            ):
                strata_results.append(res)
                stratum_label = f"{config.strata_column}={res.stratum}"
                for s in res.screens:
                    screen_rows.append((label, stratum_label, s))
                for fit_label, fit in zip(res.fit_labels, res.fits):
                    logistic_rows.append((label, stratum_label, fit_label, fit))
        done("step8-strata", f"{len(strata_results)} stratum rerun(s)")
    else:
        skipped("step8-strata", "no strata column configured")

    return AnalysisResult(
        config=config,
        seed=seed,
        data=data,
        ind=ind,
        patterns=patterns,
        corr=corr,
        retention_eigenvalues=spectrum,
        decisions=decisions,
        decisive=decisive,
        q=q,
        solution=solution,
        oriented_loadings=oriented,
        scores=comp_scores,
        screen_rows=screen_rows,
        logistic_rows=logistic_rows,
        strata=strata_results,
        steps=steps,
        notes=notes,
    )


def build_manifest(result: AnalysisResult, files: list[str]) -> dict:
    config = result.config
    separated = [
        {"component": comp, "stratum": stratum, "model": model}
        for comp, stratum, model, fit in result.logistic_rows
        if fit.separated
    ]
    manifest = {
        "schema_version": reports.SCHEMA_VERSION,
        "tool": {"name": "misscomp", "version": __version__},
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "seed": result.seed,
        "config": {
            "input_path": str(config.input_path),
            "output_dir": str(config.output_dir),
            "delimiter": config.delimiter,
            "missing_sentinels": list(config.missing_sentinels),
            "columns": config.columns,
            "correlation_kind": config.correlation_kind,
            "extraction_method": config.extraction_method,
            "criterion": config.criterion,
            "cutoff": config.cutoff,
            "pa_reps": config.pa_reps,
            "pa_percentile": config.pa_percentile,
            "seed": config.seed,
            "strata_column": config.strata_column,
            "covariate_columns": config.covariate_columns,
            "items_per_component_hint": config.items_per_component_hint,
            "expected_components_hint": config.expected_components_hint,
            "drop_fully_missing_pattern": config.drop_fully_missing_pattern,
            "output_formats": list(config.output_formats),
        },
        "data": {
            "n": result.data.n,
            "p": result.data.p,
            "indicator_columns": result.ind.column_names,
            "dropped_columns": [
                {"column": name, "reason": reason} for name, reason in result.ind.dropped_columns
            ],
            "n_fully_missing_rows": int(result.ind.fully_missing_rows.sum()),
        },
        "patterns": {
            "n_observed": result.patterns.n_observed_patterns,
            "max_possible": result.patterns.max_possible,
            "n_fully_missing": result.patterns.n_fully_missing,
        },
        "correlation": {
            "kind": result.corr.kind,
            "pd_repaired": result.corr.pd_repaired,
            "min_eigenvalue_before_repair": None
            if np.isnan(result.corr.min_eigenvalue_before_repair)
            else result.corr.min_eigenvalue_before_repair,
        },
        "retention": {
            "decisive": result.decisive,
            "q": result.q,
            "decisions": {
                crit: {"k_retained": dec.k_retained, "converged": dec.converged}
                for crit, dec in result.decisions.items()
            },
        },
        "extraction": reports.solution_summary(result.solution) if result.solution else None,
        "orientation": [int(s) for s in result.scores.orientation] if result.scores else None,
        "loading_bold_threshold": reports.LOADING_BOLD_THRESHOLD,
        "separated_fits": separated,
        "steps": result.steps,
        "notes": result.notes,
        "files": sorted(files),
    }
    return manifest


def write_bundle(result: AnalysisResult, output_dir: str | Path | None = None) -> list[str]:
    """Write the report bundle; returns the written file names."""
    outdir = Path(output_dir if output_dir is not None else result.config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    formats = set(result.config.output_formats)
    files: list[str] = []

    def emit(name):
        files.append(name)
        return outdir / name

    if "csv" in formats:
        reports.write_patterns_csv(emit("patterns.csv"), result.patterns)
        reports.write_retention_csv(emit("retention.csv"), result.decisions, result.decisive)
        reports.write_retention_curves_csv(
            emit("retention_curves.csv"), result.decisions, result.retention_eigenvalues
        )
        if result.oriented_loadings is not None:
            reports.write_loadings_csv(
                emit("loadings.csv"), result.ind.column_names, result.oriented_loadings
            )
        if result.scores is not None:
            reports.write_scores_csv(emit("scores.csv"), result.scores)
        if result.screen_rows:
            reports.write_screens_csv(emit("screens.csv"), result.screen_rows)
        if result.logistic_rows:
            reports.write_logistic_csv(emit("logistic.csv"), result.logistic_rows)
    if "md" in formats:
        reports.write_patterns_md(emit("patterns.md"), result.patterns)
        if result.oriented_loadings is not None:
            reports.write_loadings_md(
                emit("loadings.md"), result.ind.column_names, result.oriented_loadings
            )
    if "json" in formats:
        reports.write_patterns_json(emit("patterns.json"), result.patterns)

    manifest = build_manifest(result, files + ["manifest.json"])
    reports.write_manifest(outdir / "manifest.json", manifest)
    files.append("manifest.json")
    return files
