"""Verification studies: energy ordering in k, b-limit, Pohozaev and bounds."""

from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import math

from loguru import logger
import numpy as np

from src.core.exceptions import SolverError, ValidationError
from src.models.fields import NodalCandidate, RadialMesh
from src.models.problem import DomainMode, FloatArray, ProblemParams, RadiiVector
from src.services.functional import (
    annulus_integrals,
    field_distance,
    h_norm,
    operators_for,
)
from src.services.inner_solver import InnerOptions
from src.services.nehari import (
    alpha_lower_bound,
    component_norm_lower_bound,
    fibering_energy,
    scalar_fiber_solve,
    summarize,
)
from src.services.outer_solver import (
    OuterOptions,
    OuterSolveResult,
    PhiCache,
    count_sign_changes,
    derivative_jump,
    minimize_phi,
    phi,
    phi_result,
)

STRICT_MARGIN = 1e-6
BOUND_SLACK = 0.02
LOOSE_BOUND_SLACK = 0.05
DEFAULT_B_LIST = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 0.0)
# Accepted reduction of the maximal junction jump per mesh halving
JUMP_RATIO_BAND = (1.5, 2.5)


def run_cells[K, R](
    keys: Sequence[K], work: Callable[[K], R], workers: int = 1
) -> dict[K, R | SolverError]:
    """Run independent study cells, collecting solver failures per key.

    Results come back in key order regardless of completion order.
    """

    def guarded(key: K) -> R | SolverError:
        try:
            return work(key)
        except SolverError as exc:
            logger.error(f"Study cell {key!r} failed: {exc}")
            return exc

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = list(pool.map(guarded, keys))
    return dict(zip(keys, outcomes, strict=True))


# ---------------------------------------------------------------------------
# Energy ordering in k
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    """A strict inequality lhs > rhs with its margin.

    ``verdict`` is None when either side is missing.
    """

    label: str
    lhs: float
    rhs: float
    margin: float
    verdict: bool | None


@dataclass(frozen=True)
class MonotonicityRow:
    k: int
    energy: float
    solved: bool
    radii: tuple[float, ...] = ()


@dataclass(frozen=True)
class MonotonicityTable:
    rows: list[MonotonicityRow]
    pairwise: list[Comparison]
    multiples: list[Comparison]
    reduced_radii: list[Comparison] = field(default_factory=list[Comparison])
    component_ground_state: list[Comparison] = field(
        default_factory=list[Comparison]
    )

    @property
    def passed(self) -> bool:
        checks = [*self.pairwise, *self.multiples]
        solved = all(r.solved for r in self.rows)
        return solved and all(c.verdict is not False for c in checks)


def _strict(label: str, lhs: float, rhs: float, tolerance: float) -> Comparison:
    if not (math.isfinite(lhs) and math.isfinite(rhs)):
        return Comparison(label, lhs, rhs, math.nan, None)
    margin = lhs - rhs
    return Comparison(label, lhs, rhs, margin, margin > tolerance)


def monotonicity_table(
    energies: dict[int, float], radii: dict[int, tuple[float, ...]] | None = None
) -> MonotonicityTable:
    """Both energy orderings from stored energies; nan marks a failed solve."""
    ks = sorted(energies)
    radii = radii or {}
    rows = [
        MonotonicityRow(k, energies[k], math.isfinite(energies[k]), radii.get(k, ()))
        for k in ks
    ]
    ground = energies.get(0, math.nan)
    tolerance = STRICT_MARGIN * abs(ground) if math.isfinite(ground) else 0.0
    pairwise = [
        _strict(f"I(u_{k + 1}) > I(u_{k})", energies[k + 1], energies[k], tolerance)
        for k in ks
        if k + 1 in energies
    ]
    multiples: list[Comparison] = []
    for k in ks:
        if k == 0:
            multiples.append(
                Comparison("I(u_0) > 1 I(u_0)", ground, ground, 0.0, None)
            )
        else:
            label = f"I(u_{k}) > {k + 1} I(u_0)"
            multiples.append(_strict(label, energies[k], (k + 1) * ground, tolerance))
    return MonotonicityTable(rows, pairwise, multiples)


def reduced_radii(radii: RadiiVector) -> RadiiVector:
    """Drop the innermost radius: the first two annuli merge into one ball."""
    return RadiiVector(radii.interior[1:], radii.outer)


def component_ground_state_energies(
    candidate: NodalCandidate, params: ProblemParams
) -> list[float]:
    """Energy of each component scaled alone onto its own fibering maximum."""
    values: list[float] = []
    for summary in summarize(candidate, params):
        t, _ = scalar_fiber_solve(summary, params.b, params.p)
        values.append(fibering_energy([summary], np.array([t]), params.b, params.p))
    return values


def run_monotonicity(
    params: ProblemParams,
    k_max: int,
    options: OuterOptions | None = None,
    workers: int = 1,
) -> tuple[MonotonicityTable, dict[int, OuterSolveResult]]:
    """Solve k = 0..k_max and evaluate both energy orderings.

    Also evaluates phi_k at the reduced radii of the (k+1)-optimum, which must
    sit between I(u_k) and I(u_{k+1}), and projects every component of every
    u_k alone onto the k = 0 constraint set, where its energy must not fall
    below I(u_0).
    """
    if k_max < 0:
        raise ValidationError(
            message="k_max must be nonnegative", details={"k_max": k_max}
        )
    options = options or OuterOptions()
    outcomes = run_cells(
        list(range(k_max + 1)), lambda k: minimize_phi(k, params, options), workers
    )
    solved = {k: r for k, r in outcomes.items() if isinstance(r, OuterSolveResult)}
    energies = {k: solved[k].phi if k in solved else math.nan for k in outcomes}
    table = monotonicity_table(
        energies, {k: r.radii.interior for k, r in solved.items()}
    )

    ground = energies.get(0, math.nan)
    tolerance = STRICT_MARGIN * abs(ground) if math.isfinite(ground) else 0.0
    reduced: list[Comparison] = []
    for k in range(k_max):
        if k not in solved or k + 1 not in solved:
            continue
        radii = reduced_radii(solved[k + 1].radii)
        value = phi(radii, params.with_k(k), PhiCache(), options.inner)
        lower = _strict(
            f"phi_{k}(reduced) >= I(u_{k})", value + tolerance, energies[k], 0.0
        )
        upper = _strict(
            f"I(u_{k + 1}) > phi_{k}(reduced)", energies[k + 1], value, tolerance
        )
        reduced.extend([lower, upper])

    components: list[Comparison] = []
    if 0 in solved:
        for k, result in solved.items():
            try:
                lone = component_ground_state_energies(
                    result.inner.minimizer, params.with_k(k)
                )
            except SolverError as exc:
                logger.warning(f"Component comparison for k = {k} skipped: {exc}")
                continue
            components.extend(
                _strict(
                    f"E(omega_{i} of u_{k}) >= I(u_0)", value + tolerance, ground, 0.0
                )
                for i, value in enumerate(lone, start=1)
            )

    table = replace(table, reduced_radii=reduced, component_ground_state=components)
    (logger.success if table.passed else logger.warning)(
        f"Monotonicity up to k = {k_max}: {'pass' if table.passed else 'FAIL'}"
    )
    return table, solved


# ---------------------------------------------------------------------------
# b -> 0 limit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LimitRow:
    b: float
    energy: float
    distance: float
    sign_changes: int
    radii: tuple[float, ...]
    solved: bool


@dataclass(frozen=True)
class LimitStudy:
    k: int
    rows: list[LimitRow]
    distances_decreasing: bool
    energies_decreasing: bool
    sign_changes_constant: bool
    flagged: bool
    notes: list[str] = field(default_factory=list[str])

    @property
    def passed(self) -> bool:
        return (
            self.distances_decreasing
            and self.energies_decreasing
            and self.sign_changes_constant
            and all(r.solved for r in self.rows)
        )


def _strictly_decreasing(values: Sequence[float]) -> bool:
    return all(a > b for a, b in zip(values[:-1], values[1:], strict=True))


def run_b_limit(
    params: ProblemParams,
    k: int,
    b_list: Sequence[float] = DEFAULT_B_LIST,
    options: OuterOptions | None = None,
    workers: int = 1,
) -> tuple[LimitStudy, dict[float, OuterSolveResult]]:
    """Solve the k-nodal problem along a decreasing b sequence ending at 0.

    Distances are H-norms to the b = 0 solution. A non-monotone distance
    sequence is flagged as possible branch switching; the rows are kept.
    """
    b_values = [float(b) for b in b_list]
    if b_values and b_values[-1] != 0.0:
        b_values.append(0.0)
        logger.info("Appended the b = 0 reference to the b list")
    if any(b < 0 for b in b_values) or not _strictly_decreasing(b_values):
        raise ValidationError(
            message="b list must be strictly decreasing and nonnegative",
            details={"b_list": b_values},
        )
    options = options or OuterOptions()
    outcomes = run_cells(
        b_values, lambda b: minimize_phi(k, params.with_b(b), options), workers
    )
    solved = {b: r for b, r in outcomes.items() if isinstance(r, OuterSolveResult)}

    reference = solved.get(0.0)
    rows: list[LimitRow] = []
    for b in b_values:
        result = solved.get(b)
        if result is None:
            rows.append(LimitRow(b, math.nan, math.nan, -1, (), solved=False))
            continue
        mesh = result.inner.minimizer.mesh
        u = result.inner.minimizer.glued()
        if reference is None:
            distance = math.nan
        elif b == 0.0:
            distance = 0.0
        else:
            ref = reference.inner.minimizer
            distance = field_distance(mesh, u, ref.mesh, ref.glued(), params.potential)
        rows.append(
            LimitRow(
                b,
                result.phi,
                distance,
                count_sign_changes(u),
                result.radii.interior,
                solved=True,
            )
        )

    finished = [r for r in rows if r.solved]
    distances_decreasing = _strictly_decreasing([r.distance for r in finished])
    energies_decreasing = _strictly_decreasing([r.energy for r in finished])
    constant = all(r.sign_changes == k for r in finished)
    notes: list[str] = []
    if not distances_decreasing:
        notes.append(
            "distance to the b = 0 solution is not monotone: "
            "possible branch switching"
        )
        logger.warning(notes[-1])
    if not constant:
        notes.append("sign-change count varies along the b list")
        logger.warning(notes[-1])
    study = LimitStudy(
        k=k,
        rows=rows,
        distances_decreasing=distances_decreasing,
        energies_decreasing=energies_decreasing,
        sign_changes_constant=constant,
        flagged=not distances_decreasing,
        notes=notes,
    )
    return study, solved


# ---------------------------------------------------------------------------
# Pohozaev identity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PohozaevReport:
    """Terms of the Pohozaev identity for a ground state u_0.

    ``residual`` is the signed sum of the five whole-space terms;
    ``ball_residual`` adds the boundary flux of the truncated ball.
    """

    dirichlet_term: float
    potential_term: float
    potential_derivative_term: float
    kirchhoff_term: float
    nonlinear_term: float
    boundary_term: float
    residual: float
    relative_residual: float
    ball_residual: float
    relative_ball_residual: float
    derived_residual: float
    relative_derived_residual: float
    nehari_margin: float
    nehari_member: bool

    @property
    def terms(self) -> list[float]:
        return [
            self.dirichlet_term,
            self.potential_term,
            self.potential_derivative_term,
            self.kirchhoff_term,
            self.nonlinear_term,
        ]


def check_pohozaev(
    u0: FloatArray, mesh: RadialMesh, params: ProblemParams
) -> PohozaevReport:
    """Evaluate the Pohozaev identity and the N_0 membership inequality on u_0.

    Raises:
        ValidationError: If the potential has no radial derivative.
    """
    radii_quad = mesh.quad_points
    derivative = params.potential.derivative(radii_quad)
    if derivative is None:
        raise ValidationError(
            message=(
                "Potential derivative unavailable; rerun with a constant potential"
            ),
            details={"potential": params.potential.spec},
        )
    ops = operators_for(mesh, params.potential)
    b, p = params.b, params.p
    dirichlet_parts, potential_parts, lp_parts = annulus_integrals(u0, ops, p)
    total_d = float(dirichlet_parts.sum())
    potential_integral = float(potential_parts.sum())
    lp = float(lp_parts.sum())
    values = u0[:-1, None] * mesh.basis_left + u0[1:, None] * mesh.basis_right
    radial = float(np.sum(mesh.quad_weights * radii_quad * derivative * values**2))

    terms = (
        0.5 * total_d,
        1.5 * potential_integral,
        0.5 * radial,
        0.5 * b * total_d**2,
        -3.0 / p * lp,
    )
    residual = float(sum(terms))
    scale = max(abs(t) for t in terms) or 1.0
    outer = mesh.radii.outer
    slope_at_outer = (u0[-1] - u0[-2]) / (mesh.nodes[-1] - mesh.nodes[-2])
    boundary = (1.0 + b * total_d) * 2.0 * math.pi * outer**3 * slope_at_outer**2
    scaled_lp = (6.0 - p) / (2.0 * p) * lp
    derived = potential_integral + 0.5 * radial - scaled_lp
    derived_scale = (
        max(abs(potential_integral), abs(0.5 * radial), abs(scaled_lp)) or 1.0
    )
    norm_squared = total_d + potential_integral
    margin = 2.0 / (4.0 - p) * norm_squared - lp
    return PohozaevReport(
        dirichlet_term=terms[0],
        potential_term=terms[1],
        potential_derivative_term=terms[2],
        kirchhoff_term=terms[3],
        nonlinear_term=terms[4],
        boundary_term=boundary,
        residual=residual,
        relative_residual=abs(residual) / scale,
        ball_residual=residual + boundary,
        relative_ball_residual=abs(residual + boundary) / scale,
        derived_residual=derived,
        relative_derived_residual=abs(derived) / derived_scale,
        nehari_margin=margin,
        nehari_member=margin > 0,
    )


# ---------------------------------------------------------------------------
# Lower bounds and decay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundRow:
    k: int
    component: int
    quantity: str
    value: float
    bound: float
    strict_ok: bool
    loose_ok: bool


@dataclass(frozen=True)
class BoundsRecord:
    sobolev_constant: float
    rows: list[BoundRow]
    strauss_fitted: float | None
    strauss_analytic: float
    strauss_ratios: dict[int, float]
    strauss_ok: bool | None

    @property
    def strict_ok(self) -> bool:
        return all(r.strict_ok for r in self.rows)

    @property
    def loose_ok(self) -> bool:
        return all(r.loose_ok for r in self.rows)


def _decay_ratio(candidate: NodalCandidate, params: ProblemParams) -> float:
    """max_t t |u(t)| / ||u||_H."""
    u = candidate.glued()
    ops = operators_for(candidate.mesh, params.potential)
    return float(np.max(candidate.mesh.nodes * np.abs(u))) / h_norm(u, ops)


def check_bounds(
    solutions: dict[int, NodalCandidate],
    energies: dict[int, float],
    sobolev_constant: float,
    params: ProblemParams,
    delta: float = BOUND_SLACK,
    loose_delta: float = LOOSE_BOUND_SLACK,
) -> BoundsRecord:
    """Compare component norms and energies to their Sobolev lower bounds.

    The decay check fits C on the ground state and applies it to every k; it
    runs only in r3-emulation mode. The analytic radial constant is reported
    alongside.
    """
    p = params.p
    norm_bound = component_norm_lower_bound(p, sobolev_constant)
    rows: list[BoundRow] = []
    for k in sorted(solutions):
        candidate = solutions[k]
        for i, summary in enumerate(summarize(candidate, params.with_k(k)), start=1):
            value = math.sqrt(summary.n)
            rows.append(
                BoundRow(
                    k=k,
                    component=i,
                    quantity="component_norm",
                    value=value,
                    bound=norm_bound,
                    strict_ok=value >= (1.0 - delta) * norm_bound,
                    loose_ok=value >= (1.0 - loose_delta) * norm_bound,
                )
            )
        alpha_bound = alpha_lower_bound(k, p, sobolev_constant)
        energy = energies[k]
        rows.append(
            BoundRow(
                k=k,
                component=0,
                quantity="energy",
                value=energy,
                bound=alpha_bound,
                strict_ok=energy >= (1.0 - delta) * alpha_bound,
                loose_ok=energy >= (1.0 - loose_delta) * alpha_bound,
            )
        )

    analytic = (4.0 * math.pi * min(1.0, params.v0)) ** -0.5
    ratios = {k: _decay_ratio(c, params.with_k(k)) for k, c in solutions.items()}
    fitted: float | None = None
    strauss_ok: bool | None = None
    if params.mode is DomainMode.R3_EMULATION and 0 in ratios:
        fitted = ratios[0]
        ceiling = max(fitted, analytic) * (1.0 + delta)
        strauss_ok = all(r <= ceiling for r in ratios.values())
    for row in rows:
        if not row.strict_ok:
            logger.warning(
                f"Bound {row.quantity} for k={row.k} component {row.component}: "
                f"{row.value:.6g} < (1 - {delta}) * {row.bound:.6g}"
            )
    return BoundsRecord(sobolev_constant, rows, fitted, analytic, ratios, strauss_ok)


# ---------------------------------------------------------------------------
# Refinement studies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RefinementStudy:
    """One quantity per mesh level with its successive reduction ratios.

    ``ratio_band`` is the accepted [low, high] range of value[i] / value[i+1];
    None only asks for a strict decrease.
    """

    quantity: str
    cells: list[int]
    values: list[float]
    ratio_band: tuple[float, float] | None = None

    @property
    def ratios(self) -> list[float]:
        return [
            a / b if b > 0 else math.inf
            for a, b in zip(self.values[:-1], self.values[1:], strict=True)
        ]

    @property
    def decreasing(self) -> bool:
        return _strictly_decreasing(self.values)

    @property
    def rates_in_band(self) -> bool:
        if self.ratio_band is None:
            return True
        low, high = self.ratio_band
        return all(low <= ratio <= high for ratio in self.ratios)

    @property
    def passed(self) -> bool:
        return self.decreasing and self.rates_in_band


def _with_cells(options: OuterOptions, cells: int) -> OuterOptions:
    inner = replace(options.inner, cells_per_annulus=cells)
    return replace(options, inner=inner, probe_coercivity=False)


def jump_refinement_study(
    params: ProblemParams,
    k: int,
    cells: Sequence[int],
    options: OuterOptions | None = None,
) -> RefinementStudy:
    """Maximal relative derivative jump at the optimum for each mesh level."""
    options = options or OuterOptions()
    values: list[float] = []
    start: RadiiVector | None = None
    for level in cells:
        result = minimize_phi(k, params, _with_cells(options, level), start=start)
        start = result.radii
        values.append(_max_relative_jump(result.inner.minimizer))
    return RefinementStudy(
        "max_relative_jump", list(cells), values, ratio_band=JUMP_RATIO_BAND
    )


def _max_relative_jump(candidate: NodalCandidate) -> float:
    return max((j.relative for j in derivative_jump(candidate)), default=0.0)


def perturbed_jumps(
    result: OuterSolveResult,
    params: ProblemParams,
    factor: float = 0.2,
    inner: InnerOptions | None = None,
) -> dict[str, float]:
    """Maximal relative jump at the optimum and with r_1 moved by +-factor."""
    out = {"optimum": _max_relative_jump(result.inner.minimizer)}
    if result.k == 0:
        return out
    cache = PhiCache()
    for label, scale in (("minus", 1.0 - factor), ("plus", 1.0 + factor)):
        interior = (result.radii.interior[0] * scale, *result.radii.interior[1:])
        try:
            radii = RadiiVector(interior, result.radii.outer)
        except ValidationError:
            continue
        inner_result = phi_result(
            radii, params.with_k(result.k), cache, inner or _matching_inner(result)
        )
        if inner_result is not None:
            out[label] = _max_relative_jump(inner_result.minimizer)
    return out


def _matching_inner(result: OuterSolveResult) -> InnerOptions:
    """Inner options matching the mesh resolution of ``result``."""
    mesh = result.inner.minimizer.mesh
    return InnerOptions(cells_per_annulus=mesh.num_cells // mesh.num_annuli)


def pohozaev_refinement_study(
    params: ProblemParams, cells: Sequence[int], options: OuterOptions | None = None
) -> RefinementStudy:
    """Relative ball-corrected Pohozaev residual of u_0 for each mesh level."""
    options = options or OuterOptions()
    values: list[float] = []
    for level in cells:
        result = minimize_phi(0, params, _with_cells(options, level))
        candidate = result.inner.minimizer
        report = check_pohozaev(candidate.glued(), candidate.mesh, params.with_k(0))
        values.append(report.relative_ball_residual)
    return RefinementStudy("pohozaev_relative_residual", list(cells), values)
