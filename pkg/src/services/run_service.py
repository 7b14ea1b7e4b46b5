"""Run orchestration: execute a pipeline, stage its results, write one archive."""

from collections.abc import Callable
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path

from loguru import logger
import numpy as np

from src.core.config import RunConfig
from src.core.exceptions import SolverError, ValidationError
from src.core.settings import OUTPUT_ROOT, TOOL_VERSION
from src.dao.archive_dao import ArchiveWriter, ensure_writable
from src.dao.field_dao import format_number, read_field, write_field, write_table
from src.models.fields import NodalCandidate, RadialMesh
from src.models.problem import FloatArray, ProblemParams, RadiiVector
from src.schemas.archive import (
    ProfileEntry,
    RunArchive,
    StageState,
    StageStatus,
)
from src.schemas.reports import (
    AdmissibilityModel,
    BoundsModel,
    CertificatesModel,
    ContinuityModel,
    LimitStudyModel,
    MonotonicityModel,
    NehariCheckModel,
    OracleComparisonModel,
    PohozaevModel,
    ProbeDiagnosticsModel,
    RefinementModel,
    SobolevModel,
    SolveReportModel,
)
from src.services.discretization import build_mesh, mesh_from_nodes
from src.services.experiments import (
    RefinementStudy,
    check_bounds,
    check_pohozaev,
    jump_refinement_study,
    perturbed_jumps,
    pohozaev_refinement_study,
    run_b_limit,
    run_cells,
    run_monotonicity,
)
from src.services.functional import SobolevConstants, estimate_S_q
from src.services.inner_solver import default_initial_candidate
from src.services.nehari import (
    DominanceCertificates,
    NehariOptions,
    admissibility,
    coupled_nehari_solve,
    dominance_certificates,
    fibering_energy,
    nehari_membership,
    summarize,
)
from src.services.oracles import compare, nehari_multistart_oracle
from src.services.outer_solver import (
    OuterSolveResult,
    equipartition_radii,
    glue,
    minimize_phi,
    probe_continuity,
)

POHOZAEV_TOLERANCE = 1e-2
ORACLE_TOLERANCE = 1e-8


class Command(StrEnum):
    SOLVE = "solve"
    VERIFY_MONOTONICITY = "verify monotonicity"
    VERIFY_POHOZAEV = "verify pohozaev"
    VERIFY_BOUNDS = "verify bounds"
    SWEEP_B = "sweep-b"
    SP_ESTIMATE = "sp-estimate"
    NEHARI_CHECK = "nehari-check"


@dataclass(frozen=True)
class RunRequest:
    """A command with its configuration and command-line overrides."""

    command: Command
    config: RunConfig
    base_dir: Path | None = None
    out: Path | None = None
    seed: int | None = None
    force: bool = False
    k: int | None = None
    k_max: int | None = None
    b_list: tuple[float, ...] | None = None
    q: float | None = None
    field_file: Path | None = None
    oracle: bool = False


@dataclass
class _StagedField:
    entry: ProfileEntry
    t: FloatArray
    u: FloatArray
    radii: RadiiVector


@dataclass
class _Run:
    """Results held in memory until the single archive writer commits them."""

    config: RunConfig
    base_dir: Path | None
    archive: RunArchive
    fields: list[_StagedField] = field(default_factory=list[_StagedField])

    def params(self, k: int | None = None) -> ProblemParams:
        return self.config.problem_params(self.base_dir, k=k)

    def stage[T](self, name: str, work: Callable[[], T]) -> T | None:
        """Run one stage; a solver failure is recorded and the run goes on."""
        try:
            result = work()
        except SolverError as exc:
            logger.error(f"Stage {name} failed: {exc.message}")
            self.archive.stages.append(
                StageStatus(name=name, state=StageState.FAILED, message=exc.message)
            )
            return None
        self.archive.stages.append(StageStatus(name=name, state=StageState.OK))
        return result

    def verdict(self, name: str, *, passed: bool) -> None:
        self.archive.verdicts[name] = passed
        if not passed:
            logger.warning(f"Verdict {name} failed")

    def add_profiles(self, label: str, candidate: NodalCandidate) -> None:
        """Stage every component on its own annulus plus the glued profile."""
        mesh = candidate.mesh
        for component in candidate.components:
            self.fields.append(
                _StagedField(
                    ProfileEntry(
                        label=label,
                        k=candidate.k,
                        annulus=component.index,
                        file=f"{label}_annulus{component.index}.csv",
                    ),
                    component.nodes,
                    component.values,
                    mesh.radii,
                )
            )
        self.fields.append(
            _StagedField(
                ProfileEntry(
                    label=label, k=candidate.k, annulus=0, file=f"{label}_glued.csv"
                ),
                mesh.nodes,
                candidate.glued(),
                mesh.radii,
            )
        )


def _effective_config(request: RunRequest) -> RunConfig:
    """The config with command-line overrides folded in, as archived."""
    config = request.config
    problem = config.problem
    solver = config.solver
    study = config.study
    if request.k is not None:
        problem = problem.model_copy(update={"k": request.k})
    if request.seed is not None:
        solver = solver.model_copy(update={"seed": request.seed})
    if request.k_max is not None:
        study = study.model_copy(update={"k_max": request.k_max})
    if request.b_list is not None:
        study = study.model_copy(update={"b_list": list(request.b_list)})
    return config.model_copy(
        update={"problem": problem, "solver": solver, "study": study}
    )


def output_directory(request: RunRequest) -> Path:
    if request.out is not None:
        return request.out
    return Path(OUTPUT_ROOT) / request.config.output.directory


def run(request: RunRequest) -> tuple[RunArchive, Path]:
    """Execute ``request.command`` and write its archive atomically.

    Returns:
        The archive and the directory it was committed to.

    Raises:
        ConflictError: If the output directory exists and ``force`` is unset.
    """
    target = output_directory(request)
    ensure_writable(target, force=request.force)
    config = _effective_config(request)
    archive = RunArchive(
        tool_version=TOOL_VERSION,
        command=str(request.command),
        seed=config.solver.seed,
        config=config,
    )
    state = _Run(config=config, base_dir=request.base_dir, archive=archive)
    logger.info(f"Running {request.command} (seed {config.solver.seed}) into {target}")
    PIPELINES[request.command](state, request)

    with ArchiveWriter(target, force=request.force) as writer:
        with writer.lock:
            for staged in state.fields:
                write_field(
                    writer.path(staged.entry.file),
                    staged.t,
                    staged.u,
                    annulus=staged.entry.annulus,
                    radii=staged.radii,
                )
            if "csv" in config.output.formats:
                export_tables(archive, writer.staging)
        archive.profiles = [s.entry for s in state.fields]
        writer.write_archive(archive)
        path = writer.commit()
    return archive, path


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


def _record_solve(
    state: _Run, result: OuterSolveResult, label: str
) -> SolveReportModel:
    params = state.params(result.k)
    _, report = glue(result, params)
    model = SolveReportModel.model_validate(report)
    state.archive.solves.append(model)
    state.add_profiles(label, result.inner.minimizer)
    return model


def _solve_verdicts(
    state: _Run, result: OuterSolveResult, report: SolveReportModel
) -> None:
    prefix = f"k={report.k}"
    state.verdict(f"{prefix}:sign_changes", passed=report.sign_changes_ok)
    state.verdict(f"{prefix}:nehari_margins", passed=all(m > 0 for m in report.margins))
    state.verdict(f"{prefix}:stationary", passed=result.inner.converged)
    state.verdict(
        f"{prefix}:weak_residual",
        passed=report.weak_residual <= state.config.solver.residual_tol,
    )
    if report.probes:
        state.verdict(
            f"{prefix}:coercivity", passed=all(p.exceeds_optimum for p in report.probes)
        )


def _certificates_model(certificates: DominanceCertificates) -> CertificatesModel:
    return CertificatesModel(
        m_tilde=certificates.m_tilde.tolist(),
        n_matrix=certificates.n_matrix.tolist(),
        m_tilde_row_sums=certificates.m_tilde_row_sums.tolist(),
        n_row_sums=certificates.n_row_sums.tolist(),
        m_tilde_positive=certificates.m_tilde_positive,
        n_negative=certificates.n_negative,
        passed=certificates.passed,
    )


def _ball_mesh(config: RunConfig, cells: int | None = None) -> RadialMesh:
    return build_mesh(
        RadiiVector.ball(config.problem.domain_radius),
        cells or config.mesh.cells_per_annulus,
        quadrature_points=config.mesh.quadrature_points,
    )


def _sobolev(
    state: _Run, mesh: RadialMesh | None = None, q: float | None = None
) -> SobolevConstants:
    config = state.config
    estimate = estimate_S_q(
        mesh or _ball_mesh(config),
        state.params(0),
        config.problem.p if q is None else q,
        restarts=config.solver.sobolev_restarts,
        seed=config.solver.seed,
        tol=config.solver.sobolev_tol,
    )
    state.archive.sobolev = SobolevModel.model_validate(estimate)
    return estimate


def _junction_probes(state: _Run, result: OuterSolveResult) -> ProbeDiagnosticsModel:
    params = state.params(result.k)
    inner = state.config.inner_options()
    jumps = perturbed_jumps(result, params, inner=inner)
    continuity = probe_continuity(result.radii, params, inner=inner)
    moved = [value for label, value in jumps.items() if label != "optimum"]
    return ProbeDiagnosticsModel(
        k=result.k,
        jumps=jumps,
        jumps_exceed_optimum=bool(moved) and all(v > jumps["optimum"] for v in moved),
        continuity=ContinuityModel.model_validate(continuity),
    )


def _solve_pipeline(state: _Run, _: RunRequest) -> None:
    config = state.config
    k = config.problem.k
    params = state.params()
    result = state.stage(
        f"solve k={k}", lambda: minimize_phi(k, params, config.outer_options())
    )
    if result is None:
        return
    report = _record_solve(state, result, f"k{k}")
    _solve_verdicts(state, result, report)

    candidate = result.inner.minimizer
    summaries = summarize(candidate, params)
    certificates = dominance_certificates(summaries, np.ones(k + 1), params.b, params.p)
    state.archive.certificates.append(_certificates_model(certificates))
    state.verdict(f"k={k}:dominance", passed=certificates.passed)

    sobolev = state.stage("sp-estimate", lambda: _sobolev(state))
    if sobolev is not None:
        report_adm = admissibility(params, candidate, sobolev.value, result.phi)
        state.archive.admissibility.append(
            AdmissibilityModel.model_validate(report_adm)
        )
        if not report_adm.verdict:
            logger.warning(
                f"b = {params.b} is above the admissibility threshold "
                f"{report_adm.b_star:.3e}"
            )

    if k >= 1 and config.solver.probe_coercivity:
        probes = state.stage(
            "junction probes", lambda: _junction_probes(state, result)
        )
        if probes is not None:
            state.archive.probes.append(probes)
            state.verdict(f"k={k}:perturbed_jumps", passed=probes.jumps_exceed_optimum)

    if config.mesh.refinement_levels > 0 and k >= 1:
        study = state.stage(
            "jump refinement",
            lambda: jump_refinement_study(
                params, k, config.refinement_cells(), config.outer_options()
            ),
        )
        if study is not None:
            state.archive.refinements.append(RefinementModel.model_validate(study))
            state.verdict(f"k={k}:jump_refinement", passed=study.passed)


def _monotonicity_pipeline(state: _Run, _: RunRequest) -> None:
    config = state.config
    k_max = config.study.k_max
    outcome = state.stage(
        "monotonicity",
        lambda: run_monotonicity(
            state.params(), k_max, config.outer_options(), config.solver.workers
        ),
    )
    if outcome is None:
        return
    table, solved = outcome
    for k in sorted(solved):
        _record_solve(state, solved[k], f"k{k}")
    state.archive.monotonicity = MonotonicityModel.model_validate(table)
    state.verdict("monotonicity", passed=table.passed)


def _pohozaev_pipeline(state: _Run, _: RunRequest) -> None:
    config = state.config
    params = state.params(0)
    result = state.stage(
        "solve k=0", lambda: minimize_phi(0, params, config.outer_options())
    )
    if result is None:
        return
    _record_solve(state, result, "k0")
    candidate = result.inner.minimizer
    report = check_pohozaev(candidate.glued(), candidate.mesh, params)
    state.archive.pohozaev = PohozaevModel.model_validate(report)
    state.verdict("pohozaev:nehari_member", passed=report.nehari_member)
    state.verdict(
        "pohozaev:residual", passed=report.relative_ball_residual <= POHOZAEV_TOLERANCE
    )
    if config.mesh.refinement_levels > 0:
        study = state.stage(
            "pohozaev refinement",
            lambda: pohozaev_refinement_study(
                params, config.refinement_cells(), config.outer_options()
            ),
        )
        if study is not None:
            state.archive.refinements.append(RefinementModel.model_validate(study))
            state.verdict("pohozaev:refinement", passed=study.passed)


def _bounds_pipeline(state: _Run, _: RunRequest) -> None:
    config = state.config
    params = state.params()
    options = config.outer_options()
    sobolev = state.stage("sp-estimate", lambda: _sobolev(state))
    if sobolev is None:
        return
    outcomes = run_cells(
        list(range(config.study.k_max + 1)),
        lambda k: minimize_phi(k, params, options),
        config.solver.workers,
    )
    solved: dict[int, OuterSolveResult] = {}
    for k, outcome in outcomes.items():
        if isinstance(outcome, OuterSolveResult):
            solved[k] = outcome
            _record_solve(state, outcome, f"k{k}")
            state.archive.stages.append(
                StageStatus(name=f"solve k={k}", state=StageState.OK)
            )
        else:
            state.archive.stages.append(
                StageStatus(
                    name=f"solve k={k}",
                    state=StageState.FAILED,
                    message=outcome.message,
                )
            )
    record = check_bounds(
        {k: r.inner.minimizer for k, r in solved.items()},
        {k: r.phi for k, r in solved.items()},
        sobolev.value,
        params,
        delta=config.study.bound_slack,
        loose_delta=config.study.loose_bound_slack,
    )
    state.archive.bounds = BoundsModel.model_validate(record)
    state.verdict("bounds", passed=record.strict_ok)
    if record.strauss_ok is not None:
        state.verdict("bounds:strauss", passed=record.strauss_ok)


def _sweep_pipeline(state: _Run, _: RunRequest) -> None:
    config = state.config
    k = config.problem.k
    outcome = state.stage(
        f"b-limit k={k}",
        lambda: run_b_limit(
            state.params(),
            k,
            config.study.b_list,
            config.outer_options(),
            config.solver.workers,
        ),
    )
    if outcome is None:
        return
    study, solved = outcome
    for index, b in enumerate(sorted(solved, reverse=True)):
        state.add_profiles(f"b{index}", solved[b].inner.minimizer)
        logger.debug(f"Profile b{index} holds b = {b!r}")
    state.archive.b_limit = LimitStudyModel.model_validate(study)
    state.verdict("b_limit", passed=study.passed)


def _sp_pipeline(state: _Run, request: RunRequest) -> None:
    config = state.config
    levels = config.refinement_cells()
    values: list[float] = []
    for cells in levels:
        estimate = state.stage(
            f"sp-estimate cells={cells}",
            lambda cells=cells: _sobolev(state, _ball_mesh(config, cells), request.q),
        )
        if estimate is None:
            break
        values.append(estimate.value)
    if len(values) > 1:
        study = RefinementStudy("sobolev_constant", levels[: len(values)], values)
        state.archive.refinements.append(RefinementModel.model_validate(study))


def _nehari_candidate(
    state: _Run, request: RunRequest
) -> tuple[NodalCandidate, ProblemParams]:
    config = state.config
    if request.field_file is None:
        params = state.params()
        mesh = build_mesh(
            equipartition_radii(params.k, params.domain_radius),
            config.mesh.cells_per_annulus,
            quadrature_points=config.mesh.quadrature_points,
        )
        return default_initial_candidate(mesh, params, config.inner_options()), params
    record = read_field(request.field_file)
    if record.annulus != 0:
        raise ValidationError(
            message="nehari-check needs a glued profile (annulus=0)",
            details={"annulus": record.annulus},
        )
    if record.radii.outer != config.problem.domain_radius:
        raise ValidationError(
            message="Field radius does not match the configured R",
            details={"field_R": record.radii.outer, "R": config.problem.domain_radius},
        )
    mesh = mesh_from_nodes(record.radii, record.t, config.mesh.quadrature_points)
    return NodalCandidate.from_glued(mesh, record.u), state.params(record.radii.k)


def _nehari_pipeline(state: _Run, request: RunRequest) -> None:
    config = state.config
    prepared = state.stage("candidate", lambda: _nehari_candidate(state, request))
    if prepared is None:
        return
    candidate, params = prepared
    options = NehariOptions(residual_tol=config.solver.nehari_tol)
    projection = state.stage(
        "nehari projection",
        lambda: coupled_nehari_solve(candidate, params, options=options),
    )
    sobolev = state.stage("sp-estimate", lambda: _sobolev(state))
    if projection is None or sobolev is None:
        return
    summaries = projection.summaries
    t = projection.scalings
    certificates = dominance_certificates(summaries, t, params.b, params.p)
    projected = projection.apply(candidate)
    membership = nehari_membership(summarize(projected, params), params.b, params.p)
    energy = fibering_energy(summaries, t, params.b, params.p)
    report = admissibility(params, candidate, sobolev.value, energy)
    check = NehariCheckModel(
        k=params.k,
        scalings=t.tolist(),
        margins=projection.margins.tolist(),
        residuals=projection.residuals.tolist(),
        thresholds=projection.thresholds.tolist(),
        mu=projection.mu,
        newton_iterations=projection.newton_iterations,
        homotopy_steps=projection.homotopy_steps,
        member_at_projection=membership.member,
        certificates=_certificates_model(certificates),
        admissibility=AdmissibilityModel.model_validate(report),
    )
    state.verdict("nehari_check:accepted", passed=projection.accepted)
    state.verdict("nehari_check:dominance", passed=certificates.passed)

    if request.oracle:
        oracle = state.stage(
            "multistart oracle",
            lambda: nehari_multistart_oracle(
                summaries,
                params.b,
                params.p,
                config.solver.oracle_grid,
                config.solver.workers,
            ),
        )
        if oracle is not None:
            pairs = zip(t, oracle.scalings, strict=True)
            comparisons = [
                compare(f"t_{i}", float(primary), float(reference), ORACLE_TOLERANCE)
                for i, (primary, reference) in enumerate(pairs, start=1)
            ]
            check.oracle_clusters = oracle.clusters
            check.oracle = [
                OracleComparisonModel.model_validate(c) for c in comparisons
            ]
            state.verdict(
                "nehari_check:oracle_agreement",
                passed=all(c.verdict for c in comparisons),
            )
            state.verdict(
                "nehari_check:oracle_unique", passed=oracle.clusters == 1
            )
    state.archive.nehari_check = check
    state.add_profiles("projected", projected)


PIPELINES: dict[Command, Callable[[_Run, RunRequest], None]] = {
    Command.SOLVE: _solve_pipeline,
    Command.VERIFY_MONOTONICITY: _monotonicity_pipeline,
    Command.VERIFY_POHOZAEV: _pohozaev_pipeline,
    Command.VERIFY_BOUNDS: _bounds_pipeline,
    Command.SWEEP_B: _sweep_pipeline,
    Command.SP_ESTIMATE: _sp_pipeline,
    Command.NEHARI_CHECK: _nehari_pipeline,
}


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

ENERGY_HEADER = ("k", "energy", "pairwise_margin", "multiple_margin", "solved")
JUNCTION_HEADER = (
    "k",
    "junction",
    "radius",
    "left_slope",
    "right_slope",
    "jump",
    "relative",
)
BOUNDS_HEADER = (
    "k",
    "component",
    "quantity",
    "value",
    "bound",
    "strict_ok",
    "loose_ok",
)
BLIMIT_HEADER = ("b", "energy", "distance", "sign_changes", "radii", "solved")
VERDICT_HEADER = ("verdict", "passed")


type EnergyRow = tuple[int, float, float | None, float | None, bool]


def _energy_rows(archive: RunArchive) -> list[EnergyRow]:
    if archive.monotonicity is not None:
        entries = [(r.k, r.energy, r.solved) for r in archive.monotonicity.rows]
    else:
        entries = [(s.k, s.energy, True) for s in archive.solves]
    energies = {k: e for k, e, solved in entries if solved}
    ground = energies.get(0)
    rows: list[EnergyRow] = []
    for k, value, solved in entries:
        pairwise = energies[k + 1] - value if solved and k + 1 in energies else None
        multiple = value - (k + 1) * ground if solved and ground is not None else None
        rows.append((k, value, pairwise, multiple, solved))
    return rows


def export_tables(archive: RunArchive, directory: Path) -> list[Path]:
    """Write the energies, junctions, bounds, b-limit and verdict CSVs.

    Everything is read from ``archive`` alone. Tables whose stage is absent
    are written with their header only.
    """
    directory.mkdir(parents=True, exist_ok=True)
    if not archive.solves and archive.monotonicity is None:
        logger.info("No solve stage in archive; energies and junctions are empty")
    if archive.bounds is None:
        logger.info("No bounds stage in archive; bounds.csv is empty")
    if archive.b_limit is None:
        logger.info("No b-limit stage in archive; blimit.csv is empty")

    junctions = [
        (s.k, j, row.radius, row.left_slope, row.right_slope, row.jump, row.relative)
        for s in archive.solves
        for j, row in enumerate(s.jumps, start=1)
    ]
    bound_rows = archive.bounds.rows if archive.bounds is not None else []
    bounds = [
        (r.k, r.component, r.quantity, r.value, r.bound, r.strict_ok, r.loose_ok)
        for r in bound_rows
    ]
    limit_rows = archive.b_limit.rows if archive.b_limit is not None else []
    blimit = [
        (
            r.b,
            r.energy,
            r.distance,
            r.sign_changes,
            ";".join(format_number(x) for x in r.radii),
            r.solved,
        )
        for r in limit_rows
    ]
    verdicts = sorted(archive.verdicts.items())
    return [
        write_table(directory / "energies.csv", ENERGY_HEADER, _energy_rows(archive)),
        write_table(directory / "junctions.csv", JUNCTION_HEADER, junctions),
        write_table(directory / "bounds.csv", BOUNDS_HEADER, bounds),
        write_table(directory / "blimit.csv", BLIMIT_HEADER, blimit),
        write_table(directory / "verdicts.csv", VERDICT_HEADER, verdicts),
    ]
