"""Minimization of phi(r) = alpha(r) over ordered nodal radii and gluing."""

from collections.abc import Callable
from dataclasses import dataclass, field, replace
import math
import threading

from loguru import logger
import numpy as np
from scipy.optimize import OptimizeResult, minimize

from src.core.exceptions import (
    ConvergenceError,
    MeshError,
    ProjectionError,
    ValidationError,
)
from src.core.rng import substream
from src.models.fields import NodalCandidate
from src.models.problem import FloatArray, ProblemParams, RadiiVector
from src.services.functional import component_integrals, weak_residual
from src.services.inner_solver import (
    InnerOptions,
    InnerSolveResult,
    InnerStatus,
    minimize_on_nehari,
)

SIGN_TOLERANCE = 1e-9
CACHE_DIGITS = 12


# ---------------------------------------------------------------------------
# phi and its cache
# ---------------------------------------------------------------------------


class PhiCache:
    """Inner-solve results keyed by rounded radii.

    Writers hold the lock; identical keys overwrite with identical values.
    """

    def __init__(self, digits: int = CACHE_DIGITS) -> None:
        self.digits = digits
        self._entries: dict[tuple[float, ...], InnerSolveResult | None] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, radii: RadiiVector) -> bool:
        return radii.key(self.digits) in self._entries

    def get(self, radii: RadiiVector) -> InnerSolveResult | None:
        with self._lock:
            self.hits += 1
            return self._entries[radii.key(self.digits)]

    def put(self, radii: RadiiVector, result: InnerSolveResult | None) -> None:
        with self._lock:
            self.misses += 1
            self._entries[radii.key(self.digits)] = result

    def results(self) -> list[InnerSolveResult]:
        with self._lock:
            return [r for r in self._entries.values() if r is not None]

    def nearest(self, radii: RadiiVector) -> InnerSolveResult | None:
        """Closest settled entry with the same number of radii."""
        target = np.array(radii.interior)
        candidates = [r for r in self.results() if r.radii.k == radii.k and r.settled]
        if not candidates:
            return None
        return min(
            candidates,
            key=lambda r: float(np.linalg.norm(np.array(r.radii.interior) - target)),
        )

    def best(self, k: int) -> InnerSolveResult | None:
        finished = [r for r in self.results() if r.settled and r.radii.k == k]
        return min(finished, key=lambda r: r.energy) if finished else None


@dataclass(frozen=True)
class OuterOptions:
    """Settings of the radii search."""

    inner: InnerOptions = field(default_factory=InnerOptions)
    diameter_tol: float = 1e-4
    fatol: float = 1e-9
    max_evaluations: int = 400
    restarts: int = 2
    initial_step: float = 0.3
    degeneracy_floor: float = 1e-3
    probe_coercivity: bool = True
    seed: int = 0


def phi_result(
    radii: RadiiVector,
    params: ProblemParams,
    cache: PhiCache | None = None,
    inner: InnerOptions | None = None,
) -> InnerSolveResult | None:
    """Inner solve at ``radii``, warm-started from the nearest cached minimizer.

    Returns None when no Nehari minimizer could be produced.
    """
    cache = cache if cache is not None else PhiCache()
    if radii in cache:
        return cache.get(radii)
    params = params.with_k(radii.k)
    warm = cache.nearest(radii)
    result: InnerSolveResult | None = None
    for init in ([warm.minimizer] if warm is not None else []) + [None]:
        try:
            result = minimize_on_nehari(radii, params, init=init, options=inner)
        except (ProjectionError, MeshError) as exc:
            logger.debug(f"phi{radii.interior}: {exc}")
            result = None
            continue
        if result.status is not InnerStatus.NEHARI_FAILED:
            break
    cache.put(radii, result)
    return result


def phi(
    radii: RadiiVector,
    params: ProblemParams,
    cache: PhiCache | None = None,
    inner: InnerOptions | None = None,
) -> float:
    """alpha(r), or +inf when the radii admit no Nehari minimizer."""
    result = phi_result(radii, params, cache, inner)
    if result is None or result.status is InnerStatus.NEHARI_FAILED:
        return math.inf
    return result.energy


# ---------------------------------------------------------------------------
# Search coordinates
# ---------------------------------------------------------------------------


def to_coordinates(radii: RadiiVector) -> FloatArray:
    """y_i = log(g_i / g_{k+1}) for the gaps g of ``radii``."""
    gaps = radii.gaps
    return np.log(gaps[:-1] / gaps[-1])


def gaps_from_coordinates(y: FloatArray, outer: float) -> FloatArray:
    z = np.concatenate([np.asarray(y, dtype=np.float64), [0.0]])
    with np.errstate(under="ignore"):
        weights = np.exp(z - z.max())
    return outer * weights / weights.sum()


def radii_from_gaps(gaps: FloatArray, outer: float) -> RadiiVector:
    return RadiiVector(tuple(float(r) for r in np.cumsum(gaps)[:-1]), outer)


def equipartition_radii(k: int, outer: float) -> RadiiVector:
    """r_i = R (i/(k+1))^(1/3): annuli of equal volume."""
    interior = tuple(outer * (i / (k + 1)) ** (1.0 / 3.0) for i in range(1, k + 1))
    return RadiiVector(interior, outer)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeRecord:
    label: str
    radii: tuple[float, ...]
    phi: float
    exceeds_optimum: bool


@dataclass(frozen=True)
class OuterSolveResult:
    """Optimal radii with the inner minimizer there."""

    radii: RadiiVector
    inner: InnerSolveResult
    phi: float
    diameter: float
    evaluations: int
    restarts: int
    probes: list[ProbeRecord] = field(default_factory=list[ProbeRecord])
    boundary_flagged: bool = False

    @property
    def k(self) -> int:
        return self.radii.k


def _simplex_diameter(simplex: FloatArray, outer: float) -> float:
    radii = np.array([np.cumsum(gaps_from_coordinates(y, outer))[:-1] for y in simplex])
    return float(max(np.max(np.abs(a - b)) for a in radii for b in radii))


def _nelder_mead(
    objective: Callable[[FloatArray], float],
    simplex: FloatArray,
    outer: float,
    options: OuterOptions,
    reference: float,
) -> tuple[OptimizeResult, int, float]:
    """Run Nelder-Mead until the simplex spans at most diameter_tol * R in radii.

    A step of h in the coordinates moves every radius by at most h * R, so the
    coordinate tolerance diameter_tol / 2 is tried first; while the radii
    diameter is still too large the search resumes from its final simplex.
    Returns the last result, the evaluations spent and the radii diameter.
    """
    k = simplex.shape[1]
    budget = options.max_evaluations
    evaluations = 0
    target = options.diameter_tol * outer
    while True:
        with np.errstate(invalid="ignore", over="ignore"):
            found = minimize(
                objective,
                simplex[0],
                method="Nelder-Mead",
                options={
                    "initial_simplex": simplex,
                    "xatol": 0.5 * options.diameter_tol,
                    "fatol": options.fatol * max(1.0, reference),
                    "maxfev": budget,
                },
            )
        evaluations += int(found.nfev)
        budget -= int(found.nfev)
        simplex = np.asarray(found.final_simplex[0], dtype=np.float64)
        diameter = _simplex_diameter(simplex, outer)
        if diameter <= target or budget <= k + 1 or not math.isfinite(found.fun):
            return found, evaluations, diameter
        logger.debug(f"Simplex spans {diameter:.3e} in radii; resuming the search")


def minimize_phi(
    k: int,
    params: ProblemParams,
    options: OuterOptions | None = None,
    *,
    start: RadiiVector | None = None,
    cache: PhiCache | None = None,
) -> OuterSolveResult:
    """Nelder-Mead search for the radii minimizing phi.

    The search runs in log-ratio coordinates of the gaps, so every point is an
    ordered radii vector. Points with a gap below the degeneracy floor cost
    +inf. Restarts after the first perturb the incumbent with the ``outer``
    substream of the seed.

    Raises:
        ConvergenceError: If no evaluated point produced a Nehari minimizer.
    """
    options = options or OuterOptions()
    params = params.with_k(k)
    outer = params.domain_radius
    cache = cache if cache is not None else PhiCache()

    if k == 0:
        radii = RadiiVector.ball(outer)
        result = phi_result(radii, params, cache, options.inner)
        if result is None or result.status is InnerStatus.NEHARI_FAILED:
            raise ConvergenceError(
                message="Ground state solve failed", details={"k": 0}
            )
        return OuterSolveResult(radii, result, result.energy, 0.0, 1, 0)

    floor = options.degeneracy_floor * outer

    def objective(y: FloatArray) -> float:
        gaps = gaps_from_coordinates(y, outer)
        if float(gaps.min()) < floor:
            return math.inf
        try:
            radii = radii_from_gaps(gaps, outer)
        except ValidationError:
            return math.inf
        value = phi(radii, params, cache, options.inner)
        logger.debug(f"phi{tuple(round(r, 6) for r in radii.interior)} = {value:.12g}")
        return value

    rng = substream(options.seed, "outer")
    x_best = to_coordinates(start or equipartition_radii(k, outer))
    evaluations = 0
    diameter = math.inf
    restarts = 0
    for restart in range(max(1, options.restarts)):
        x0 = x_best
        if restart > 0:
            x0 = x_best + rng.normal(scale=options.initial_step, size=k)
        simplex = np.vstack([x0, x0 + options.initial_step * np.eye(k)])
        first = objective(x0)
        reference = abs(first) if math.isfinite(first) else 1.0
        found, spent, final_diameter = _nelder_mead(
            objective, simplex, outer, options, reference
        )
        evaluations += spent
        restarts += 1
        if math.isfinite(float(found.fun)):
            x_best = np.asarray(found.x, dtype=np.float64)
            diameter = final_diameter
        logger.info(
            f"Restart {restart + 1}: phi = {float(found.fun):.12g}, "
            f"diameter {diameter:.3e}, {spent} evaluations"
        )

    best = cache.best(k)
    if best is None:
        raise ConvergenceError(
            message=f"No radii vector produced a Nehari minimizer for k = {k}",
            details={"k": k, "evaluations": evaluations},
        )
    boundary = bool(np.min(best.radii.gaps) <= 2.0 * floor)
    if boundary:
        logger.warning(
            f"Optimum {best.radii.interior} sits next to the degeneracy floor"
        )
    result = OuterSolveResult(
        radii=best.radii,
        inner=best,
        phi=best.energy,
        diameter=diameter,
        evaluations=evaluations,
        restarts=restarts,
        boundary_flagged=boundary,
    )
    if options.probe_coercivity:
        probes = probe_coercivity(result, params, cache, options.inner)
        result = replace(result, probes=probes)
    logger.success(f"k = {k}: radii {best.radii.interior}, phi = {best.energy:.12g}")
    return result


# ---------------------------------------------------------------------------
# Probes
# ---------------------------------------------------------------------------


def probe_coercivity(
    result: OuterSolveResult,
    params: ProblemParams,
    cache: PhiCache | None = None,
    inner: InnerOptions | None = None,
) -> list[ProbeRecord]:
    """phi at a 10x-shrunk innermost gap and with r_k pushed to 0.999 R."""
    if result.k == 0:
        return []
    outer = result.radii.outer
    interior = list(result.radii.interior)
    shrunk = [interior[0] / 10.0, *interior[1:]]
    pushed = [*interior[:-1], 0.999 * outer]
    records: list[ProbeRecord] = []
    for label, radii in (("shrunk-gap", shrunk), ("outer-push", pushed)):
        try:
            vector = RadiiVector(tuple(radii), outer)
        except ValidationError:
            records.append(ProbeRecord(label, tuple(radii), math.inf, True))
            continue
        value = phi(vector, params, cache, inner)
        records.append(ProbeRecord(label, vector.interior, value, value > result.phi))
    return records


@dataclass(frozen=True)
class ContinuityProbe:
    base: tuple[float, ...]
    base_phi: float
    deltas: list[float]
    values: list[float]
    ratios: list[float]

    @property
    def ratio_spread(self) -> float:
        finite = [r for r in self.ratios if math.isfinite(r) and r > 0]
        if len(finite) < 2:  # noqa: PLR2004
            return math.inf
        return max(finite) / min(finite)


def probe_continuity(
    radii: RadiiVector,
    params: ProblemParams,
    cache: PhiCache | None = None,
    inner: InnerOptions | None = None,
    deltas: tuple[float, ...] = (1e-2, 1e-3),
) -> ContinuityProbe:
    """Difference quotients |phi(r + delta R) - phi(r)| / (delta R) along all radii."""
    base = phi(radii, params, cache, inner)
    outer = radii.outer
    values: list[float] = []
    ratios: list[float] = []
    for delta in deltas:
        try:
            interior = tuple(r + delta * outer for r in radii.interior)
            shifted = RadiiVector(interior, outer)
        except ValidationError:
            values.append(math.inf)
            ratios.append(math.inf)
            continue
        value = phi(shifted, params, cache, inner)
        values.append(value)
        ratios.append(abs(value - base) / (delta * outer))
    return ContinuityProbe(radii.interior, base, list(deltas), values, ratios)


# ---------------------------------------------------------------------------
# Gluing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JunctionJump:
    radius: float
    left_slope: float
    right_slope: float
    jump: float
    relative: float


def derivative_jump(candidate: NodalCandidate) -> list[JunctionJump]:
    """One-sided slopes of the glued field at every interior junction."""
    mesh = candidate.mesh
    u = candidate.glued()
    slopes = np.diff(u) / mesh.widths
    scale = float(np.max(np.abs(slopes))) if slopes.size else 0.0
    jumps: list[JunctionJump] = []
    for node in mesh.junction_nodes[1:-1]:
        left = float(slopes[node - 1])
        right = float(slopes[node])
        jump = right - left
        jumps.append(
            JunctionJump(
                radius=float(mesh.nodes[node]),
                left_slope=left,
                right_slope=right,
                jump=jump,
                relative=abs(jump) / scale if scale > 0 else 0.0,
            )
        )
    return jumps


def count_sign_changes(values: FloatArray, rel_tol: float = SIGN_TOLERANCE) -> int:
    """Strict sign flips between consecutive significant values."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return 0
    threshold = rel_tol * float(np.max(np.abs(values)))
    significant = values[np.abs(values) > threshold]
    signs = np.signbit(significant)
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


@dataclass(frozen=True)
class SolveReport:
    """Summary of a glued k-nodal solution."""

    k: int
    radii: tuple[float, ...]
    outer_radius: float
    energy: float
    sign_changes: int
    weak_residual: float
    component_residuals: list[float]
    jumps: list[JunctionJump]
    max_relative_jump: float
    margins: list[float]
    scalings: list[float]
    norm_squares: list[float]
    inner_status: str
    inner_iterations: int
    evaluations: int
    boundary_flagged: bool
    probes: list[ProbeRecord]

    @property
    def sign_changes_ok(self) -> bool:
        return self.sign_changes == self.k


def glue(
    result: OuterSolveResult, params: ProblemParams
) -> tuple[FloatArray, SolveReport]:
    """Sum the components of the optimal minimizer and report its quality."""
    candidate = result.inner.minimizer
    u = candidate.glued()
    params = params.with_k(result.k)
    jumps = derivative_jump(candidate)
    residual = weak_residual(u, candidate.mesh, params)
    projection = result.inner.projection
    report = SolveReport(
        k=result.k,
        radii=result.radii.interior,
        outer_radius=result.radii.outer,
        energy=result.inner.energy,
        sign_changes=count_sign_changes(u),
        weak_residual=residual.relative,
        component_residuals=result.inner.residuals.relative.tolist(),
        jumps=jumps,
        max_relative_jump=max((j.relative for j in jumps), default=0.0),
        margins=projection.margins.tolist(),
        scalings=projection.scalings.tolist(),
        norm_squares=component_integrals(candidate, params).norm_squares.tolist(),
        inner_status=str(result.inner.status),
        inner_iterations=result.inner.iterations,
        evaluations=result.evaluations,
        boundary_flagged=result.boundary_flagged,
        probes=result.probes,
    )
    return u, report
