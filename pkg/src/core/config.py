"""Run configuration: strict TOML schema, parsing and serialization."""

from pathlib import Path
import tomllib
from typing import Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError as PydanticValidationError,
    ValidationInfo,
    field_validator,
)
import tomli_w

from src.core.exceptions import ConfigError, NotFoundError, ValidationError
from src.models.problem import (
    EMULATION_P_LOWER,
    P_LOWER,
    P_UPPER,
    DomainMode,
    ProblemParams,
    parse_potential,
)
from src.services.discretization import Grading
from src.services.experiments import BOUND_SLACK, DEFAULT_B_LIST, LOOSE_BOUND_SLACK
from src.services.inner_solver import InnerOptions
from src.services.nehari import NehariOptions
from src.services.outer_solver import OuterOptions

type Violation = dict[str, str | int | float]


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class ProblemConfig(_Block):
    """Analytic data of the problem; ``R`` is the truncation radius."""

    b: float = Field(default=0.01, ge=0.0)
    p: float = 3.0
    domain_radius: float = Field(default=10.0, gt=0.0, alias="R")
    potential: str = "constant:1.0"
    mode: DomainMode = DomainMode.BALL
    k: int = Field(default=1, ge=0)

    @field_validator("p")
    @classmethod
    def _p_in_range(cls, value: float) -> float:
        if not P_LOWER < value < P_UPPER:
            msg = "p must lie in (2,4)"
            raise ValueError(msg)
        return value

    @field_validator("potential")
    @classmethod
    def _potential_positive(cls, value: str, info: ValidationInfo) -> str:
        context: dict[str, Path | None] = info.context or {}
        try:
            potential = parse_potential(value, context.get("base_dir"))
        except ValidationError as exc:
            raise ValueError(exc.message) from exc
        radius = info.data.get("domain_radius")
        if isinstance(radius, float) and potential.minimum(radius) <= 0:
            msg = "potential must be bounded below by a positive V0 on [0,R]"
            raise ValueError(msg)
        return value

    @field_validator("mode")
    @classmethod
    def _mode_matches_p(cls, value: DomainMode, info: ValidationInfo) -> DomainMode:
        p = info.data.get("p")
        if (
            value is DomainMode.R3_EMULATION
            and isinstance(p, float)
            and not EMULATION_P_LOWER < p
        ):
            msg = "r3-emulation requires p in (3,4)"
            raise ValueError(msg)
        return value


class MeshConfig(_Block):
    cells_per_annulus: int = Field(default=64, ge=4)
    grading: str = "uniform"
    refinement_levels: int = Field(default=0, ge=0, le=6)
    quadrature_points: int = Field(default=4, ge=2, le=12)

    @field_validator("grading")
    @classmethod
    def _grading_known(cls, value: str) -> str:
        try:
            Grading.parse(value)
        except ValidationError as exc:
            raise ValueError(exc.message) from exc
        return value


class SolverConfig(_Block):
    """Tolerances, budgets and the master seed."""

    residual_tol: float = Field(default=1e-6, gt=0.0)
    stagnation_tol: float = Field(default=1e-12, gt=0.0)
    nehari_tol: float = Field(default=1e-10, gt=0.0)
    max_inner_iterations: int = Field(default=2000, ge=1)
    diameter_tol: float = Field(default=1e-4, gt=0.0)
    max_evaluations: int = Field(default=400, ge=1)
    restarts: int = Field(default=2, ge=0)
    degeneracy_floor: float = Field(default=1e-3, gt=0.0, lt=1.0)
    probe_coercivity: bool = True
    sobolev_restarts: int = Field(default=5, ge=1)
    sobolev_tol: float = Field(default=1e-9, gt=0.0)
    oracle_grid: int = Field(default=7, ge=2)
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)


class StudyConfig(_Block):
    k_max: int = Field(default=2, ge=0)
    b_list: list[float] = Field(default_factory=lambda: list(DEFAULT_B_LIST))
    bound_slack: float = Field(default=BOUND_SLACK, gt=0.0, lt=1.0)
    loose_bound_slack: float = Field(default=LOOSE_BOUND_SLACK, gt=0.0, lt=1.0)

    @field_validator("b_list")
    @classmethod
    def _b_list_nonnegative(cls, value: list[float]) -> list[float]:
        if not value or any(b < 0 for b in value):
            msg = "b_list must be a nonempty list of nonnegative values"
            raise ValueError(msg)
        return value


class OutputConfig(_Block):
    directory: str = "output"
    formats: list[Literal["csv", "json"]] = Field(
        default_factory=lambda: ["csv", "json"]
    )


class RunConfig(_Block):
    """Complete, validated configuration of one run."""

    problem: ProblemConfig = Field(default_factory=ProblemConfig)
    mesh: MeshConfig = Field(default_factory=MeshConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    study: StudyConfig = Field(default_factory=StudyConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    def problem_params(
        self, base_dir: Path | None = None, *, k: int | None = None
    ) -> ProblemParams:
        problem = self.problem
        return ProblemParams(
            b=problem.b,
            p=problem.p,
            potential=parse_potential(problem.potential, base_dir),
            domain_radius=problem.domain_radius,
            k=problem.k if k is None else k,
            mode=problem.mode,
        )

    def inner_options(self) -> InnerOptions:
        solver = self.solver
        return InnerOptions(
            cells_per_annulus=self.mesh.cells_per_annulus,
            grading=Grading.parse(self.mesh.grading),
            quadrature_points=self.mesh.quadrature_points,
            residual_tol=solver.residual_tol,
            stagnation_tol=solver.stagnation_tol,
            max_iterations=solver.max_inner_iterations,
            nehari=NehariOptions(residual_tol=solver.nehari_tol),
        )

    def outer_options(self, seed: int | None = None) -> OuterOptions:
        solver = self.solver
        return OuterOptions(
            inner=self.inner_options(),
            diameter_tol=solver.diameter_tol,
            max_evaluations=solver.max_evaluations,
            restarts=solver.restarts,
            degeneracy_floor=solver.degeneracy_floor,
            probe_coercivity=solver.probe_coercivity,
            seed=solver.seed if seed is None else seed,
        )

    def refinement_cells(self) -> list[int]:
        """Cells per annulus on each refinement level, coarsest first."""
        base = self.mesh.cells_per_annulus
        return [base * 2**level for level in range(self.mesh.refinement_levels + 1)]


def _violations(exc: PydanticValidationError) -> list[Violation]:
    violations: list[Violation] = []
    for error in exc.errors():
        message = error["msg"].removeprefix("Value error, ")
        violations.append({
            "key": ".".join(str(part) for part in error["loc"]),
            "value": str(error.get("input", "")),
            "constraint": message,
        })
    return violations


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    """Parse and validate TOML configuration text.

    Args:
        text: TOML document with optional [problem], [mesh], [solver], [study]
            and [output] tables.
        base_dir: Directory against which relative potential tables resolve.

    Returns:
        The validated configuration with defaults filled.

    Raises:
        ConfigError: With every violation listed under ``details["violations"]``.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(
            message=f"Configuration is not valid TOML: {exc}",
            details={"violations": [{"key": "", "value": "", "constraint": str(exc)}]},
        ) from exc
    try:
        return RunConfig.model_validate(data, context={"base_dir": base_dir})
    except PydanticValidationError as exc:
        violations = _violations(exc)
        summary = "; ".join(f"{v['key']}: {v['constraint']}" for v in violations)
        raise ConfigError(
            message=f"Invalid configuration: {summary}",
            details={"violations": violations},
        ) from exc


def load_config(path: Path | None) -> tuple[RunConfig, Path | None]:
    """Read a config file, or return the defaults when ``path`` is None."""
    if path is None:
        return RunConfig(), None
    if not path.is_file():
        raise NotFoundError(
            message=f"Config file {path} does not exist", details={"path": str(path)}
        )
    base_dir = path.parent
    return parse_config(path.read_text(encoding="utf-8"), base_dir), base_dir


def serialize_config(config: RunConfig) -> str:
    """TOML text that parses back to ``config``."""
    return tomli_w.dumps(config.model_dump(mode="json", by_alias=True))
