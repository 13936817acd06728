"""End-to-end pipeline and CLI behavior on small synthetic inputs."""

from __future__ import annotations

import csv
import json
import subprocess

import numpy as np
import pytest
from scipy import stats

from misscomp import cli
from misscomp.pipeline import (
    DEFAULT_SENTINELS,
    IngestError,
    PipelineError,
    RunConfig,
    analyze,
    build_manifest,
    ingest,
    write_bundle,
)
from misscomp.retention import CRITERIA


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


@pytest.fixture(scope="module")
def synthetic_csv(tmp_path_factory):
    """One dominant component across five items, 25% missing each, with a
    complete numeric covariate and a two-level stratum column."""
    rng = np.random.default_rng(7)
    n, k = 400, 5
    sigma = np.full((k, k), 0.7)
    np.fill_diagonal(sigma, 1.0)
    latent = rng.multivariate_normal(np.zeros(k), sigma, size=n)
    miss = latent > stats.norm.ppf(1 - 0.25)
    values = rng.normal(50.0, 10.0, size=(n, k))
    age = rng.normal(40.0, 5.0, size=n)
    site = rng.choice(["a", "b"], size=n)
    path = tmp_path_factory.mktemp("data") / "survey.csv"
    rows = []
    for i in range(n):
        row = ["" if miss[i, j] else f"{values[i, j]:.2f}" for j in range(k)]
        row += [f"{age[i]:.1f}", site[i]]
        rows.append(row)
    return write_csv(path, [f"item{j + 1}" for j in range(k)] + ["age", "site"], rows)


@pytest.fixture
def independent_csv(tmp_path):
    """Two exactly independent indicators: identity correlation, so the
    Kaiser rule retains nothing."""
    return write_csv(
        tmp_path / "flat.csv",
        ["y1", "y2"],
        [["1", "2"], ["3", ""], ["", "4"], ["", ""]],
    )


class TestIngest:
    def test_default_sentinels(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", ["a", "b"], [["1", "x"], ["NA", "."], ["3", "y"]])
        data = ingest(path)
        a = data.column("a")
        assert a[0] == 1.0 and np.isnan(a[1]) and a[2] == 3.0
        b = data.column("b")
        assert b[0] == "x" and b[1] is None and b[2] == "y"
        assert data.kind("a") == "numeric"
        assert data.kind("b") == "categorical"

    def test_custom_sentinels(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", ["a"], [["-999"], ["2"]])
        data = ingest(path, sentinels=("-999",))
        a = data.column("a")
        assert np.isnan(a[0]) and a[1] == 2.0

    def test_custom_delimiter(self, tmp_path):
        path = tmp_path / "d.txt"
        path.write_text("a;b\n1;2\n")
        data = ingest(path, delimiter=";")
        assert data.column_names == ["a", "b"]
        assert data.column("b")[0] == 2.0

    def test_numeric_threshold_exactly_met(self, tmp_path):
        cells = [[str(i)] for i in range(9)] + [["junk"]]
        data = ingest(write_csv(tmp_path / "d.csv", ["a"], cells))
        # 9 of 10 parse: still numeric, the straggler becomes missing
        assert data.kind("a") == "numeric"
        assert np.isnan(data.column("a")[9])

    def test_numeric_threshold_missed(self, tmp_path):
        cells = [[str(i)] for i in range(8)] + [["junk"], ["junk"]]
        data = ingest(write_csv(tmp_path / "d.csv", ["a"], cells))
        assert data.kind("a") == "categorical"
        assert data.column("a")[0] == "0"

    def test_ragged_row_reports_line_number(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n3\n")
        with pytest.raises(IngestError, match="row 3"):
            ingest(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("")
        with pytest.raises(IngestError, match="no header"):
            ingest(path)

    def test_duplicate_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,a\n1,2\n")
        with pytest.raises(IngestError, match="duplicate"):
            ingest(path)

    def test_blank_header_name(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,\n1,2\n")
        with pytest.raises(IngestError, match="empty column name"):
            ingest(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestError, match="cannot read"):
            ingest(tmp_path / "nope.csv")


class TestRunConfig:
    def test_defaults_validate(self, synthetic_csv):
        RunConfig(input_path=synthetic_csv).validate()

    @pytest.mark.parametrize(
        "kwargs, match",
        [
            ({"correlation_kind": "spearman"}, "correlation kind"),
            ({"extraction_method": "ml"}, "extraction method"),
            ({"criterion": "scree"}, "criterion"),
            ({"output_formats": ("csv", "xlsx")}, "formats"),
            (
                {"criterion": "auto", "items_per_component_hint": 5},
                "auto",
            ),
        ],
    )
    def test_rejects_bad_values(self, kwargs, match):
        with pytest.raises(ValueError, match=match):
            RunConfig(input_path="x.csv", **kwargs).validate()


@pytest.fixture(scope="module")
def full_result(synthetic_csv):
    config = RunConfig(
        input_path=synthetic_csv,
        seed=123,
        covariate_columns=["age"],
        strata_column="site",
        output_formats=("csv", "json", "md"),
    )
    return analyze(config)


class TestAnalyze:
    def test_retains_one_component(self, full_result):
        assert full_result.q == 1
        assert full_result.decisive == "parallel"
        assert set(full_result.decisions) == set(CRITERIA)
        assert full_result.decisions["parallel"].k_retained == 1

    def test_complete_columns_become_covariates_not_indicators(self, full_result):
        assert full_result.ind.column_names == [f"item{j}_miss" for j in range(1, 6)]
        dropped = dict(full_result.ind.dropped_columns)
        assert dropped == {"age": "all cells observed", "site": "all cells observed"}

    def test_loadings_oriented_positive(self, full_result):
        loadings = full_result.oriented_loadings
        assert loadings.shape == (5, 1)
        # the dominant component of a positive block loads one way after orienting
        assert (loadings[:, 0] > 0.5).all()

    def test_screens_cover_items_covariate_and_indicators(self, full_result):
        base = [(c, v.variable) for c, s, v in full_result.screen_rows if s == ""]
        expected_vars = {f"item{j}" for j in range(1, 6)} | {"age"} | {
            f"item{j}_miss" for j in range(1, 6)
        }
        assert {v for _, v in base} == expected_vars
        assert {c for c, _ in base} == {"component_1"}
        # the stratifying column itself is not screened
        assert "site" not in {v for _, v in base}

    def test_logistic_models_fitted(self, full_result):
        base = {(m,) for c, s, m, f in full_result.logistic_rows if s == ""}
        assert {m for (m,) in base} == {
            "simple:item1_miss",
            "simple:item2_miss",
            "simple:item3_miss",
            "simple:item4_miss",
            "simple:item5_miss",
            "multiple",
            "covariates",
        }
        for _, _, _, fit in full_result.logistic_rows:
            assert fit.n > 0
            assert fit.separated in (True, False)

    def test_strata_rerun_covers_both_levels(self, full_result):
        assert {r.stratum for r in full_result.strata} == {"a", "b"}
        strata_labels = {s for _, s, _ in full_result.screen_rows if s}
        assert strata_labels == {"site=a", "site=b"}

    def test_all_steps_done(self, full_result):
        assert [s["step"] for s in full_result.steps] == [
            f"step{i}-{name}"
            for i, name in enumerate(
                ["indicators", "correlation", "retention", "extraction",
                 "dichotomize", "screens", "logistic", "strata"],
                start=1,
            )
        ]
        assert all(s["status"] == "done" for s in full_result.steps)

    def test_auto_criterion_resolves_from_hints(self, synthetic_csv):
        config = RunConfig(
            input_path=synthetic_csv,
            criterion="auto",
            items_per_component_hint=5,
            expected_components_hint=3,
            seed=1,
        )
        result = analyze(config)
        # n=400 with a dense design favors the empirical Kaiser variant
        assert result.decisive == "ekc"
        assert any("auto" in note for note in result.notes)

    def test_zero_retention_skips_later_steps(self, independent_csv):
        result = analyze(RunConfig(input_path=independent_csv, criterion="kaiser", seed=5))
        assert result.q == 0
        assert result.solution is None
        assert result.scores is None
        assert result.screen_rows == [] and result.logistic_rows == []
        skipped = {s["step"]: s for s in result.steps if s["status"] == "skipped"}
        assert set(skipped) == {
            "step4-extraction",
            "step5-dichotomize",
            "step6-screens",
            "step7-logistic",
            "step8-strata",
        }
        assert "retained 0" in skipped["step4-extraction"]["detail"]

    def test_missing_input_is_step1_error(self, tmp_path):
        with pytest.raises(PipelineError) as err:
            analyze(RunConfig(input_path=tmp_path / "nope.csv"))
        assert err.value.step == "step1-indicators"

    def test_single_indicator_is_step2_error(self, tmp_path):
        path = write_csv(tmp_path / "one.csv", ["a", "b"], [["1", "1"], ["", "2"], ["3", "3"]])
        with pytest.raises(PipelineError) as err:
            analyze(RunConfig(input_path=path))
        assert err.value.step == "step2-correlation"

    def test_unknown_covariate_is_step7_error(self, synthetic_csv):
        config = RunConfig(input_path=synthetic_csv, seed=1, covariate_columns=["nope"])
        with pytest.raises(PipelineError) as err:
            analyze(config)
        assert err.value.step == "step7-logistic"

    def test_unknown_strata_column_is_step8_error(self, synthetic_csv):
        config = RunConfig(input_path=synthetic_csv, seed=1, strata_column="nope")
        with pytest.raises(PipelineError) as err:
            analyze(config)
        assert err.value.step == "step8-strata"


class TestBundle:
    def test_file_list_all_formats(self, full_result, tmp_path):
        files = write_bundle(full_result, tmp_path)
        assert sorted(files) == [
            "loadings.csv",
            "loadings.md",
            "logistic.csv",
            "manifest.json",
            "patterns.csv",
            "patterns.json",
            "patterns.md",
            "retention.csv",
            "retention_curves.csv",
            "scores.csv",
            "screens.csv",
        ]
        for name in files:
            assert (tmp_path / name).stat().st_size > 0

    def test_zero_retention_bundle_is_minimal(self, independent_csv, tmp_path):
        result = analyze(RunConfig(input_path=independent_csv, criterion="kaiser", seed=5))
        files = write_bundle(result, tmp_path)
        assert sorted(files) == [
            "manifest.json",
            "patterns.csv",
            "patterns.json",
            "retention.csv",
            "retention_curves.csv",
        ]
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["extraction"] is None
        assert manifest["retention"]["q"] == 0

    def test_manifest_content(self, full_result, tmp_path):
        files = write_bundle(full_result, tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["schema_version"] == 1
        assert manifest["seed"] == 123
        assert manifest["tool"]["name"] == "misscomp"
        assert manifest["files"] == sorted(files)
        assert manifest["retention"]["decisive"] == "parallel"
        assert manifest["retention"]["q"] == 1
        assert manifest["data"]["n"] == 400
        assert manifest["correlation"]["kind"] == "pearson"
        assert isinstance(manifest["separated_fits"], list)
        assert manifest["loading_bold_threshold"] == 0.550

    def test_build_manifest_matches_written(self, full_result, tmp_path):
        files = write_bundle(full_result, tmp_path)
        rebuilt = build_manifest(full_result, files)
        written = json.loads((tmp_path / "manifest.json").read_text())
        assert rebuilt == written

    def test_rerun_is_byte_identical(self, synthetic_csv, tmp_path):
        config = RunConfig(
            input_path=synthetic_csv,
            output_dir=tmp_path,
            seed=123,
            covariate_columns=["age"],
            strata_column="site",
            output_formats=("csv", "json", "md"),
        )
        files = write_bundle(analyze(config))
        first = {name: (tmp_path / name).read_bytes() for name in files}
        files_again = write_bundle(analyze(config))
        assert files_again == files
        for name in files:
            assert (tmp_path / name).read_bytes() == first[name], name


class TestCli:
    def test_guidance(self, capsys):
        rc = cli.main(["guidance", "--n", "1000", "--items-per-component", "5", "--components", "3"])
        assert rc == 0
        assert capsys.readouterr().out.strip() == "parallel"

    def test_guidance_rejects_bad_design(self, capsys):
        rc = cli.main(["guidance", "--n", "0", "--items-per-component", "5", "--components", "3"])
        assert rc == 1
        assert capsys.readouterr().err.startswith("error [guidance]:")

    def test_patterns_writes_bundle(self, synthetic_csv, tmp_path, capsys):
        rc = cli.main(["patterns", "--input", str(synthetic_csv), "--out", str(tmp_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "pattern(s) across 5 indicator(s)" in out
        assert (tmp_path / "patterns.csv").exists()
        assert (tmp_path / "patterns.json").exists()
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "patterns"
        assert manifest["files"] == ["manifest.json", "patterns.csv", "patterns.json"]

    def test_patterns_md_only(self, synthetic_csv, tmp_path):
        rc = cli.main(
            ["patterns", "--input", str(synthetic_csv), "--out", str(tmp_path), "--formats", "md"]
        )
        assert rc == 0
        assert (tmp_path / "patterns.md").exists()
        assert not (tmp_path / "patterns.csv").exists()

    def test_analyze_end_to_end(self, synthetic_csv, tmp_path, capsys):
        rc = cli.main(
            [
                "analyze",
                "--input", str(synthetic_csv),
                "--out", str(tmp_path),
                "--seed", "123",
                "--covariates", "age",
                "--strata", "site",
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "parallel: 1 component(s) (decisive)" in out
        for name in ("patterns.csv", "retention.csv", "loadings.csv", "manifest.json"):
            assert (tmp_path / name).exists()

    def test_analyze_missing_input(self, tmp_path, capsys):
        rc = cli.main(["analyze", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path)])
        assert rc == 1
        assert capsys.readouterr().err.startswith("error [step1-indicators]:")

    def test_patterns_missing_input(self, tmp_path, capsys):
        rc = cli.main(["patterns", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path)])
        assert rc == 1
        assert capsys.readouterr().err.startswith("error [ingest]:")

    def test_simulate_needs_cells(self, tmp_path, capsys):
        rc = cli.main(["simulate", "--out", str(tmp_path)])
        assert rc == 1
        assert capsys.readouterr().err.startswith("error [simulate]:")

    def test_simulate_rejects_bad_cell(self, tmp_path, capsys):
        rc = cli.main(["simulate", "--cell", "3by5", "--out", str(tmp_path)])
        assert rc == 1
        assert "--cell" in capsys.readouterr().err

    def test_simulate_small_cell(self, tmp_path, capsys):
        rc = cli.main(
            [
                "simulate",
                "--cell", "1x5",
                "--n", "150",
                "--pmiss", "0.25",
                "--reps", "2",
                "--seed", "3",
                "--out", str(tmp_path),
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "mean proportion correct" in out
        grid = (tmp_path / "grid.csv").read_text().splitlines()
        assert len(grid) == 2
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        # cells are recorded as the integer seeding keys
        assert manifest["config"]["cells"] == [[1, 5, 150, 2500, 0, 0]]
        assert manifest["config"]["reps"] == 2

    def test_console_script_installed(self):
        proc = subprocess.run(
            ["misscomp", "guidance", "--n", "200", "--items-per-component", "3", "--components", "2"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert proc.stdout.strip() == "parallel"
