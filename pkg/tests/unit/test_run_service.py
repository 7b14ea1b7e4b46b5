"""Unit tests for run orchestration and table export."""

from dataclasses import replace

import pytest

from src.core.config import parse_config
from src.core.exceptions import ConflictError
from src.dao.field_dao import read_table
from src.schemas.archive import ARCHIVE_FILE, RunArchive, StageState
from src.schemas.reports import (
    MonotonicityModel,
    RefinementModel,
    SolveReportModel,
)
from src.services.experiments import RefinementStudy, monotonicity_table
from src.services.inner_solver import InnerStatus
from src.services.outer_solver import glue
from src.services.run_service import (
    Command,
    RunRequest,
    _effective_config,
    _Run,
    _solve_verdicts,
    export_tables,
    run,
)
from tests.conftest import FAST_INNER, make_params

TABLES = ("energies.csv", "junctions.csv", "bounds.csv", "blimit.csv", "verdicts.csv")

SMALL = (
    "[mesh]\ncells_per_annulus = 8\nrefinement_levels = 1\n"
    "[solver]\nsobolev_restarts = 1\n"
)


def _empty_archive() -> RunArchive:
    return RunArchive(
        tool_version="0.1.0", command="solve", seed=0, config=parse_config("")
    )


class TestExportTables:
    """Tests for export_tables."""

    def test_empty_archive_gives_header_only_tables(self, tmp_path):
        """Test that every table is written even without stages."""
        paths = export_tables(_empty_archive(), tmp_path / "tables")
        assert [p.name for p in paths] == list(TABLES)
        assert all(read_table(p) == [] for p in paths)

    def test_energy_margins(self, tmp_path):
        """Test pairwise and multiple margins in energies.csv."""
        archive = _empty_archive()
        archive.monotonicity = MonotonicityModel.model_validate(
            monotonicity_table({0: 1.0, 1: 2.5, 2: 4.0})
        )
        archive.verdicts["monotonicity"] = True
        energies, *_, verdicts = export_tables(archive, tmp_path)
        rows = read_table(energies)
        assert [r["k"] for r in rows] == ["0", "1", "2"]
        assert rows[0]["pairwise_margin"] == "1.5"
        assert rows[1]["multiple_margin"] == "0.5"
        assert rows[2]["pairwise_margin"] == ""
        assert rows[2]["solved"] == "true"
        assert read_table(verdicts) == [{"verdict": "monotonicity", "passed": "true"}]


class TestEffectiveConfig:
    """Tests for _effective_config."""

    def test_overrides_are_recorded(self):
        """Test that command-line k and seed land in the archived config."""
        request = RunRequest(
            command=Command.SOLVE,
            config=parse_config(""),
            k=2,
            seed=11,
            b_list=(0.01, 0.001),
        )
        config = _effective_config(request)
        assert config.problem.k == 2
        assert config.solver.seed == 11
        assert config.study.b_list == [0.01, 0.001]
        assert request.config.problem.k == 1


class TestRun:
    """Tests for run."""

    def test_sp_estimate_writes_archive(self, out_dir):
        """Test a full sp-estimate run into a fresh directory."""
        request = RunRequest(
            command=Command.SP_ESTIMATE, config=parse_config(SMALL), out=out_dir
        )
        archive, path = run(request)
        assert path == out_dir
        assert (out_dir / ARCHIVE_FILE).is_file()
        assert all((out_dir / name).is_file() for name in TABLES)
        assert [s.name for s in archive.stages] == [
            "sp-estimate cells=8",
            "sp-estimate cells=16",
        ]
        assert all(s.state is StageState.OK for s in archive.stages)
        assert archive.sobolev is not None
        assert archive.sobolev.value > 0
        (refinement,) = archive.refinements
        assert refinement.cells == [8, 16]
        assert archive.command == "sp-estimate"

    def test_rerun_needs_force(self, out_dir):
        """Test that an existing output directory is only replaced with force."""
        config = parse_config(SMALL.replace("levels = 1", "levels = 0"))
        request = RunRequest(command=Command.SP_ESTIMATE, config=config, out=out_dir)
        run(request)
        with pytest.raises(ConflictError):
            run(request)
        forced = RunRequest(
            command=Command.SP_ESTIMATE, config=config, out=out_dir, force=True
        )
        archive, _ = run(forced)
        assert archive.refinements == []


class TestSolveVerdicts:
    """Tests for _solve_verdicts."""

    def _verdicts(self, result, residual_tol):
        config = parse_config(f"[solver]\nresidual_tol = {residual_tol!r}\n")
        state = _Run(config=config, base_dir=None, archive=_empty_archive())
        _, report = glue(result, make_params(0))
        _solve_verdicts(state, result, SolveReportModel.model_validate(report))
        return state.archive.verdicts

    def test_converged_ground_state(self, ground_state):
        """Test that a converged solve passes stationarity and the residual."""
        verdicts = self._verdicts(ground_state, FAST_INNER.residual_tol)
        assert verdicts["k=0:stationary"]
        assert verdicts["k=0:weak_residual"]
        assert verdicts["k=0:sign_changes"]

    def test_line_search_failure_is_not_stationary(self, ground_state):
        """Test that an iterate left by a failed line search fails stationarity."""
        inner = replace(ground_state.inner, status=InnerStatus.LINE_SEARCH_FAILED)
        verdicts = self._verdicts(replace(ground_state, inner=inner), 1e-6)
        assert verdicts["k=0:stationary"] is False

    def test_residual_above_tolerance_fails(self, ground_state):
        """Test the weak residual verdict against solver.residual_tol."""
        verdicts = self._verdicts(ground_state, 1e-14)
        assert verdicts["k=0:weak_residual"] is False


class TestRefinementVerdict:
    """Tests for the rate band of refinement studies."""

    def test_band_is_recorded_in_the_archive_model(self):
        """Test that ratios, band and verdict reach the report model."""
        study = RefinementStudy(
            "max_relative_jump", [16, 32, 64], [0.4, 0.1, 0.05], ratio_band=(1.5, 2.5)
        )
        model = RefinementModel.model_validate(study)
        assert model.ratios == pytest.approx([4.0, 2.0])
        assert model.ratio_band == (1.5, 2.5)
        assert model.decreasing
        assert not model.rates_in_band
        assert not model.passed
