"""Exception hierarchy shared by the solver library and the CLI."""

from dataclasses import dataclass, field

# Shared type alias for error detail values
type ErrorDetails = dict[
    str,
    str
    | int
    | float
    | bool
    | list[str]
    | list[float]
    | list[dict[str, str | int | float]]
    | None,
]


@dataclass
class AppError(Exception):
    """Base exception for all application errors."""

    code: str = "app_error"
    message: str = "An application error occurred"
    details: ErrorDetails = field(default_factory=dict)

    def __str__(self) -> str:  # pyright: ignore[reportImplicitOverride]
        return self.message


@dataclass
class NotFoundError(AppError):
    """Raised when a requested file, stage or table does not exist."""

    code: str = "not_found"
    message: str = "Resource not found"


@dataclass
class ValidationError(AppError):
    """Raised when domain validation fails."""

    code: str = "validation_error"
    message: str = "Validation failed"


@dataclass
class ConfigError(ValidationError):
    """Raised when a run configuration violates one or more constraints."""

    code: str = "config_error"
    message: str = "Invalid run configuration"


@dataclass
class MeshError(ValidationError):
    """Raised when a mesh cannot be built for the requested radii."""

    code: str = "mesh_error"
    message: str = "Degenerate annulus"


@dataclass
class ConflictError(AppError):
    """Raised when an operation conflicts with existing state."""

    code: str = "conflict"
    message: str = "Resource conflict"


@dataclass
class SolverError(AppError):
    """Base class for numerical failures."""

    code: str = "solver_error"
    message: str = "Solver failed"


@dataclass
class ProjectionError(SolverError):
    """Raised when a candidate cannot be projected onto the Nehari set."""

    code: str = "projection_error"
    message: str = "Nehari projection failed"


@dataclass
class InadmissibleComponentError(ProjectionError):
    """Raised when the fibering map of a component has no interior maximum."""

    code: str = "inadmissible_component"
    message: str = "Inadmissible b or degenerate component"


@dataclass
class HomotopyStallError(ProjectionError):
    """Raised when the continuation in the coupling parameter cannot advance."""

    code: str = "homotopy_stall"
    message: str = "Homotopy stall"


@dataclass
class ConstraintViolationError(ProjectionError):
    """Raised when an accepted scaling violates the strict local-maximum constraint."""

    code: str = "constraint_failed"
    message: str = "Local-maximum constraint failed"


@dataclass
class PreconditionError(ProjectionError):
    """Raised when a candidate does not dominate its own projection."""

    code: str = "precondition_failed"
    message: str = "Projection precondition violated"


@dataclass
class ConvergenceError(SolverError):
    """Raised when an iteration exhausts its budget."""

    code: str = "no_convergence"
    message: str = "Iteration did not converge"


@dataclass
class OracleUnavailableError(SolverError):
    """Raised when a reference computation cannot produce a trustworthy value."""

    code: str = "oracle_unavailable"
    message: str = "Oracle unavailable"


@dataclass
class VerdictFailure(AppError):
    """Raised by the CLI when a run completes but a verdict fails."""

    code: str = "verdict_failure"
    message: str = "One or more verdicts failed"


@dataclass
class InternalError(AppError):
    """Payload stand-in for an exception from outside the application."""

    code: str = "internal_error"
    message: str = "Internal error"
