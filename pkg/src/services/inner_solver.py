"""Constrained minimization of E_b over the Nehari set for fixed nodal radii."""

from dataclasses import dataclass, field
from enum import StrEnum
import itertools
import math

from loguru import logger
import numpy as np

from src.core.exceptions import InadmissibleComponentError, ProjectionError
from src.models.fields import IntArray, NodalCandidate, RadialMesh
from src.models.problem import FloatArray, ProblemParams, RadiiVector
from src.services.discretization import Grading, build_mesh, transport_candidate
from src.services.functional import (
    RadialOperators,
    annulus_integrals,
    breakdown_of,
    dual_norm,
    energy_gradient,
    h_norm,
    operators_for,
)
from src.services.nehari import (
    ComponentSummary,
    NehariOptions,
    NehariProjection,
    coupled_nehari_solve,
    scalar_fiber_solve,
)

SHARPENING_EXPONENTS = (1, 2, 4, 8, 16, 32)
BUMP_PEAKS = (0.5, 0.25, 0.1)


class InnerStatus(StrEnum):
    CONVERGED = "converged"
    STAGNATED = "stagnated"
    LINE_SEARCH_FAILED = "line-search-failed"
    NEHARI_FAILED = "nehari-failed"
    MAX_ITERS = "max-iters"


@dataclass(frozen=True)
class InnerOptions:
    """Mesh and iteration settings of one inner solve."""

    cells_per_annulus: int = 64
    grading: Grading = field(default_factory=Grading)
    quadrature_points: int = 4
    residual_tol: float = 1e-6
    stagnation_tol: float = 1e-12
    max_iterations: int = 2000
    armijo_slope: float = 1e-4
    min_step: float = 1e-10
    sharpening_exponents: tuple[int, ...] = SHARPENING_EXPONENTS
    bump_peaks: tuple[float, ...] = BUMP_PEAKS
    nehari: NehariOptions = field(default_factory=NehariOptions)


@dataclass(frozen=True)
class ComponentResiduals:
    absolute: FloatArray
    relative: FloatArray


@dataclass(frozen=True)
class InnerSolveResult:
    """Minimizer over the Nehari set for one radii vector."""

    minimizer: NodalCandidate
    energy: float
    projection: NehariProjection
    residuals: ComponentResiduals
    residual_norm: float
    history: list[float]
    iterations: int
    status: InnerStatus
    message: str = ""

    @property
    def converged(self) -> bool:
        """Whether the free weak residual reached its tolerance."""
        return self.status is InnerStatus.CONVERGED

    @property
    def settled(self) -> bool:
        """Whether the iterate is a usable Nehari point, stationary or not."""
        return self.status in (
            InnerStatus.CONVERGED,
            InnerStatus.STAGNATED,
            InnerStatus.LINE_SEARCH_FAILED,
        )

    @property
    def radii(self) -> RadiiVector:
        return self.minimizer.radii


def annulus_free_nodes(mesh: RadialMesh, index: int) -> IntArray:
    """Unknowns of component ``index``; the first annulus also owns the origin."""
    window = mesh.annulus_slice(index)
    start = window.start if index == 1 else window.start + 1
    return np.arange(start, window.stop - 1, dtype=np.int_)


def _one_bump(
    mesh: RadialMesh, index: int, exponent: int, peak: float = 0.5
) -> FloatArray:
    """Bump of annulus ``index``; outside the ball it peaks at ``peak`` of the width."""
    edges = mesh.radii.edges
    a, b = float(edges[index - 1]), float(edges[index])
    t = mesh.nodes[mesh.annulus_slice(index)]
    if index == 1:
        shape = np.cos(0.5 * math.pi * t / b)
    else:
        s = (t - a) / (b - a)
        shape = np.sin(math.pi * s ** (math.log(0.5) / math.log(peak)))
    values = np.clip(shape, 0.0, None) ** exponent
    values[-1] = 0.0
    if index >= 2:  # noqa: PLR2004
        values[0] = 0.0
    return values


def default_initial_candidate(
    mesh: RadialMesh, params: ProblemParams, options: InnerOptions | None = None
) -> NodalCandidate:
    """Alternating one-bump profiles, each the best projectable shape of its annulus.

    Shapes are bumps peaking at each of ``options.bump_peaks`` (fractions of
    the annulus width, measured from the inner edge) raised to each of
    ``options.sharpening_exponents``. Every shape is projected alone onto its
    fibering maximum; per annulus, the shape with the lowest projected energy
    wins.

    Raises:
        InadmissibleComponentError: If no shape of some annulus is projectable.
    """
    options = options or InnerOptions()
    ops = operators_for(mesh, params.potential)
    b, p = params.b, params.p
    best: list[tuple[float, int, float] | None] = [None] * mesh.num_annuli
    for exponent, peak in itertools.product(
        options.sharpening_exponents, options.bump_peaks
    ):
        glued = np.zeros(mesh.num_nodes)
        for i in range(1, mesh.num_annuli + 1):
            glued[mesh.annulus_slice(i)] += _one_bump(mesh, i, exponent, peak)
        dirichlet, potential_terms, lp = annulus_integrals(glued, ops, p)
        for i in range(mesh.num_annuli):
            summary = ComponentSummary(
                float(dirichlet[i] + potential_terms[i]),
                float(dirichlet[i]),
                float(lp[i]),
            )
            try:
                t, _ = scalar_fiber_solve(summary, b, p)
            except InadmissibleComponentError:
                continue
            value = (
                0.5 * t**2 * summary.n
                + 0.25 * b * t**4 * summary.d**2
                - t**p * summary.ell / p
            )
            incumbent = best[i]
            if incumbent is None or value < incumbent[0]:
                best[i] = (value, exponent, peak)

    values = np.zeros(mesh.num_nodes)
    for i, choice in enumerate(best, start=1):
        if choice is None:
            raise InadmissibleComponentError(
                message=f"No projectable initial profile on annulus {i}",
                details={"annulus": i, "b": b},
            )
        sign = 1.0 if i % 2 == 1 else -1.0
        _, exponent, peak = choice
        values[mesh.annulus_slice(i)] += sign * _one_bump(mesh, i, exponent, peak)
    shapes = [(c[1], c[2]) for c in best if c is not None]
    logger.debug(f"Initial (exponent, peak) per annulus: {shapes}")
    return NodalCandidate.from_glued(mesh, values)


def _component_residuals(
    u: FloatArray, gradient: FloatArray, ops: RadialOperators, mesh: RadialMesh
) -> ComponentResiduals:
    absolute = np.zeros(mesh.num_annuli)
    relative = np.zeros(mesh.num_annuli)
    inner = ops.h_inner
    for i in range(1, mesh.num_annuli + 1):
        nodes = annulus_free_nodes(mesh, i)
        norm = dual_norm(gradient, ops, nodes)
        local = np.zeros_like(u)
        local[nodes] = u[nodes]
        scale = math.sqrt(max(inner.quadratic(local), 0.0))
        absolute[i - 1] = norm
        relative[i - 1] = norm / scale if scale > 0 else norm
    return ComponentResiduals(absolute, relative)


def annular_system_residual(
    candidate: NodalCandidate, params: ProblemParams
) -> ComponentResiduals:
    """Dual norms of the annular system residual, one per component.

    Component i is tested against the basis functions of its own annulus with
    the Kirchhoff coefficient 1 + b * sum_j D_j shared by all annuli.
    """
    ops = operators_for(candidate.mesh, params.potential)
    u = candidate.glued()
    gradient = energy_gradient(u, ops, params.b, params.p)
    return _component_residuals(u, gradient, ops, candidate.mesh)


def _project(
    candidate: NodalCandidate, params: ProblemParams, options: InnerOptions
) -> tuple[NodalCandidate, NehariProjection]:
    projection = coupled_nehari_solve(
        candidate, params, initial=np.ones(candidate.k + 1), options=options.nehari
    )
    return projection.apply(candidate), projection


def minimize_on_nehari(
    radii: RadiiVector,
    params: ProblemParams,
    init: NodalCandidate | None = None,
    options: InnerOptions | None = None,
) -> InnerSolveResult:
    """Minimize E_b over the Nehari set of the annuli given by ``radii``.

    Each iteration takes a Kirchhoff-metric gradient step, enforces the
    alternating signs and projects back with the coupled scaling solve; the
    step length follows Armijo backtracking.

    Args:
        radii: Interior radii and R.
        params: Problem parameters; ``params.k`` must equal ``radii.k``.
        init: Optional starting candidate, transported onto the new mesh.
        options: Mesh and iteration settings.

    Returns:
        The last accepted iterate with its status.

    Raises:
        ProjectionError: If the starting candidate cannot be projected.
    """
    options = options or InnerOptions()
    params = params.with_k(radii.k) if params.k != radii.k else params
    mesh = build_mesh(
        radii, options.cells_per_annulus, options.grading, options.quadrature_points
    )
    ops = operators_for(mesh, params.potential)
    free = mesh.product_free_nodes()
    b, p = params.b, params.p

    if init is None:
        start = default_initial_candidate(mesh, params, options)
    else:
        start = init if init.mesh is mesh else transport_candidate(init, mesh)
    current, projection = _project(start.sign_enforced(), params, options)

    u = current.glued()
    value = breakdown_of(u, ops, b, p).energy
    history = [value]
    status = InnerStatus.MAX_ITERS
    message = ""
    residual_norm = math.inf
    iteration = 0
    for iteration in range(1, options.max_iterations + 1):  # noqa: B007
        gradient = energy_gradient(u, ops, b, p)
        scale = h_norm(u, ops)
        residual_norm = dual_norm(gradient, ops, free) / scale
        if residual_norm <= options.residual_tol:
            status = InnerStatus.CONVERGED
            break

        total_d = ops.stiffness.quadratic(u)
        metric = ops.stiffness.scaled_sum(1.0 + b * total_d, ops.mass)
        direction = metric.solve(gradient, free)
        slope = float(gradient[free] @ direction[free])

        step = 1.0
        accepted = False
        projection_failures = 0
        while step >= options.min_step:
            moved = NodalCandidate.from_glued(mesh, u - step * direction)
            trial = moved.sign_enforced()
            try:
                trial, trial_projection = _project(trial, params, options)
            except ProjectionError:
                projection_failures += 1
                step *= 0.5
                continue
            trial_u = trial.glued()
            trial_value = breakdown_of(trial_u, ops, b, p).energy
            if trial_value <= value - options.armijo_slope * step * slope:
                accepted = True
                break
            step *= 0.5

        if not accepted:
            if projection_failures > 0:
                status = InnerStatus.NEHARI_FAILED
                message = (
                    "Projection failed along the search direction "
                    f"at iteration {iteration}"
                )
            else:
                status = InnerStatus.LINE_SEARCH_FAILED
                message = "Line search could not decrease the energy"
            break

        decrease = value - trial_value
        current, projection, u, value = trial, trial_projection, trial_u, trial_value
        history.append(value)
        if decrease < options.stagnation_tol * abs(value):
            status = InnerStatus.STAGNATED
            message = f"Energy decrease {decrease:.3e} below stagnation tolerance"
            gradient = energy_gradient(u, ops, b, p)
            residual_norm = dual_norm(gradient, ops, free) / h_norm(u, ops)
            break

    residuals = _component_residuals(u, energy_gradient(u, ops, b, p), ops, mesh)
    if status is InnerStatus.MAX_ITERS:
        message = (
            f"Iteration budget exhausted with relative residual {residual_norm:.3e}"
        )
    log = logger.debug if status is InnerStatus.CONVERGED else logger.warning
    log(
        f"Inner solve at radii {radii.interior}: {status} "
        f"after {iteration} iterations, "
        f"energy {value:.12g}, residual {residual_norm:.3e}"
    )
    return InnerSolveResult(
        minimizer=current,
        energy=value,
        projection=projection,
        residuals=residuals,
        residual_norm=residual_norm,
        history=history,
        iterations=iteration,
        status=status,
        message=message,
    )
