"""Brute-force reference computations.

None of these share assembly, projection or root-finding code with the
solver path; each builds its own quadrature and calls its own scipy solver.
"""

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import itertools
import math
from typing import Protocol

from loguru import logger
import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad
from scipy.optimize import minimize, root

from src.core.exceptions import OracleUnavailableError, ValidationError
from src.models.problem import FloatArray, ProblemParams, RadiiVector

DISCREPANCY_FLOOR = 1e-300
CLUSTER_RADIUS = 1e-6
MAX_ORACLE_COMPONENTS = 3
MAX_PENALTY_CELLS = 32
PENALTY_SCHEDULE = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6)


class SummaryLike(Protocol):
    @property
    def n(self) -> float: ...

    @property
    def d(self) -> float: ...

    @property
    def ell(self) -> float: ...


@dataclass(frozen=True)
class OracleComparison:
    quantity: str
    primary: float
    oracle: float
    discrepancy: float
    tolerance: float
    verdict: bool


def compare(
    quantity: str, primary: float, oracle: float, tolerance: float
) -> OracleComparison:
    """Relative discrepancy |primary - oracle| / max(|oracle|, floor)."""
    discrepancy = abs(primary - oracle) / max(abs(oracle), DISCREPANCY_FLOOR)
    return OracleComparison(
        quantity, primary, oracle, discrepancy, tolerance, discrepancy <= tolerance
    )


# ---------------------------------------------------------------------------
# Multistart Newton for the scaling system
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultistartResult:
    scalings: FloatArray
    clusters: int
    converged_starts: int
    total_starts: int


def _scaling_equations(
    log_t: FloatArray,
    n: FloatArray,
    d: FloatArray,
    ell: FloatArray,
    b: float,
    p: float,
) -> FloatArray:
    t = np.exp(log_t)
    coupling = float(np.dot(t * t, d))
    return (ell * t ** (p - 2.0) - n - b * d * coupling) / n


def _solve_from(
    start: FloatArray, n: FloatArray, d: FloatArray, ell: FloatArray, b: float, p: float
) -> FloatArray | None:
    with np.errstate(all="ignore"):
        sol = root(
            _scaling_equations,
            np.log(start),
            args=(n, d, ell, b, p),
            method="hybr",
            tol=1e-14,
        )
        if not sol.success or not np.all(np.isfinite(sol.x)):
            return None
        t = np.exp(sol.x)
        if float(np.max(np.abs(_scaling_equations(sol.x, n, d, ell, b, p)))) > 1e-10:
            return None
    if np.any(2.0 * t**2 * n - (4.0 - p) * t**p * ell <= 0):
        return None
    return t


def _close(t: FloatArray, center: FloatArray) -> bool:
    return bool(np.max(np.abs(t - center) / np.abs(center)) <= CLUSTER_RADIUS)


def nehari_multistart_oracle(
    summaries: Sequence[SummaryLike],
    b: float,
    p: float,
    grid_density: int = 7,
    workers: int = 1,
) -> MultistartResult:
    """Newton from every point of a log grid over [1e-3, 1e3]^(k+1).

    Roots violating the local-maximum constraint are discarded; the rest are
    clustered at relative radius 1e-6 and exactly one cluster is expected.

    Raises:
        ValidationError: If more than three components are given.
        OracleUnavailableError: If zero or several clusters are found.
    """
    if len(summaries) > MAX_ORACLE_COMPONENTS:
        raise ValidationError(
            message="Multistart oracle is limited to k + 1 <= 3",
            details={"components": len(summaries)},
        )
    n = np.array([s.n for s in summaries], dtype=np.float64)
    d = np.array([s.d for s in summaries], dtype=np.float64)
    ell = np.array([s.ell for s in summaries], dtype=np.float64)
    axis = np.logspace(-3.0, 3.0, grid_density)
    grid = itertools.product(axis, repeat=len(summaries))
    starts = [np.array(point) for point in grid]

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        found = list(pool.map(lambda s: _solve_from(s, n, d, ell, b, p), starts))
    roots = [t for t in found if t is not None]

    clusters: list[FloatArray] = []
    for t in roots:
        if not any(_close(t, c) for c in clusters):
            clusters.append(t)
    if len(clusters) != 1:
        raise OracleUnavailableError(
            message=f"Multistart oracle found {len(clusters)} admissible clusters",
            details={"clusters": len(clusters), "converged": len(roots)},
        )
    center = np.mean([t for t in roots if _close(t, clusters[0])], axis=0)
    logger.debug(
        f"Multistart oracle: {len(roots)}/{len(starts)} starts converged to {center}"
    )
    return MultistartResult(center, 1, len(roots), len(starts))


# ---------------------------------------------------------------------------
# Penalty-method constrained minimization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Annulus:
    """Dense P1 element data of one annulus, quadrature pre-applied."""

    nodes: FloatArray
    free: np.ndarray
    stiffness: FloatArray
    mass: FloatArray
    basis: FloatArray
    weights: FloatArray


def _annulus(
    edges: tuple[float, float],
    cells: int,
    potential_values: FloatArray,
    points: FloatArray,
    weights: FloatArray,
    *,
    first: bool,
) -> _Annulus:
    a, b = edges
    nodes = np.linspace(a, b, cells + 1)
    size = nodes.size
    basis = np.zeros((points.size, size))
    stiffness = np.zeros((size, size))
    for c in range(cells):
        left, right = nodes[c], nodes[c + 1]
        h = right - left
        rows = slice(c * weights.size // cells, (c + 1) * weights.size // cells)
        x = points[rows]
        basis[rows, c] = (right - x) / h
        basis[rows, c + 1] = (x - left) / h
        k = np.sum(weights[rows]) / h**2
        pair = np.ix_([c, c + 1], [c, c + 1])
        stiffness[pair] += k * np.array([[1.0, -1.0], [-1.0, 1.0]])
    mass = basis.T @ (basis * (weights * potential_values)[:, None])
    free = np.arange(0 if first else 1, size - 1)
    return _Annulus(nodes, free, stiffness, mass, basis, weights)


def _annuli(
    radii: RadiiVector, params: ProblemParams, cells: int, order: int
) -> list[_Annulus]:
    ref_x, ref_w = np.polynomial.legendre.leggauss(order)
    edges = radii.edges
    out: list[_Annulus] = []
    for i in range(edges.size - 1):
        a, b = float(edges[i]), float(edges[i + 1])
        nodes = np.linspace(a, b, cells + 1)
        left, right = nodes[:-1, None], nodes[1:, None]
        x = (left + 0.5 * (right - left) * (ref_x + 1.0)).ravel()
        w = (0.5 * (right - left) * ref_w).ravel() * 4.0 * math.pi * x**2
        out.append(_annulus((a, b), cells, params.potential(x), x, w, first=i == 0))
    return out


@dataclass
class _Integrals:
    n: FloatArray
    d: FloatArray
    ell: FloatArray
    grad_n: list[FloatArray]
    grad_d: list[FloatArray]
    grad_ell: list[FloatArray]


def _integrals(
    blocks: list[FloatArray], annuli: list[_Annulus], p: float
) -> _Integrals:
    n, d, ell = [], [], []
    gn, gd, gl = [], [], []
    for v, ann in zip(blocks, annuli, strict=True):
        full = np.zeros(ann.nodes.size)
        full[ann.free] = v
        av = ann.stiffness @ full
        mv = ann.mass @ full
        values = ann.basis @ full
        d.append(float(full @ av))
        n.append(float(full @ (av + mv)))
        ell.append(float(np.sum(ann.weights * np.abs(values) ** p)))
        gd.append(2.0 * av[ann.free])
        gn.append(2.0 * (av + mv)[ann.free])
        power = ann.weights * np.abs(values) ** (p - 2.0) * values
        gl.append(p * (ann.basis.T @ power)[ann.free])
    return _Integrals(np.array(n), np.array(d), np.array(ell), gn, gd, gl)


@dataclass(frozen=True)
class PenaltyResult:
    energy: float
    penalty_weight: float
    constraint_residual: float
    scalings: FloatArray


def _project(ints: _Integrals, b: float, p: float) -> FloatArray:
    with np.errstate(all="ignore"):
        sol = root(
            _scaling_equations,
            np.zeros(ints.n.size),
            args=(ints.n, ints.d, ints.ell, b, p),
            method="hybr",
            tol=1e-14,
        )
    if not sol.success:
        raise OracleUnavailableError(
            message="Penalty oracle could not project its minimizer"
        )
    return np.exp(sol.x)


def penalty_minimization_oracle(
    radii: RadiiVector,
    params: ProblemParams,
    cells_per_annulus: int = 16,
    initial: Sequence[FloatArray] | None = None,
    quadrature_order: int = 6,
) -> PenaltyResult:
    """Minimize E_b + rho E_ref sum_i (F_i / l_i)^2 under sign bounds.

    F_i is the derivative of the fibering energy in t_i at t = 1. rho runs
    through 1e1..1e6 with warm starts; the final iterate is scaled onto the
    constraint set and its energy returned.

    Raises:
        ValidationError: On an oversized mesh or a vanishing initial component.
        OracleUnavailableError: If the continuation diverges.
    """
    if cells_per_annulus > MAX_PENALTY_CELLS:
        raise ValidationError(
            message=(
                f"Penalty oracle supports at most {MAX_PENALTY_CELLS} cells per annulus"
            ),
            details={"cells_per_annulus": cells_per_annulus},
        )
    b, p = params.b, params.p
    annuli = _annuli(radii, params, cells_per_annulus, quadrature_order)
    signs = [1.0 if i % 2 == 0 else -1.0 for i in range(len(annuli))]
    if initial is None:
        blocks = []
        for ann, sign in zip(annuli, signs, strict=True):
            a, c = ann.nodes[0], ann.nodes[-1]
            x = ann.nodes[ann.free]
            if a == 0.0:
                shape = np.cos(0.5 * math.pi * x / c)
            else:
                shape = np.sin(math.pi * (x - a) / (c - a))
            blocks.append(sign * shape)
    else:
        blocks = [np.asarray(v, dtype=np.float64) for v in initial]
    if any(not np.any(v) for v in blocks):
        raise ValidationError(
            message="Penalty oracle needs nonzero initial components"
        )

    sizes = [ann.free.size for ann in annuli]
    splits = np.cumsum(sizes)[:-1]
    bounds = [
        (0.0, None) if sign > 0 else (None, 0.0)
        for sign, size in zip(signs, sizes, strict=True)
        for _ in range(size)
    ]

    # Start from the constraint set so E_ref is a Nehari energy
    ints = _integrals(blocks, annuli, p)
    t0 = _project(ints, b, p)
    x = np.concatenate([t * v for t, v in zip(t0, blocks, strict=True)])
    ints = _integrals(np.split(x, splits), annuli, p)
    e_ref = abs(
        0.5 * ints.n.sum() + 0.25 * b * ints.d.sum() ** 2 - ints.ell.sum() / p
    )

    def objective(x: FloatArray, rho: float) -> tuple[float, FloatArray]:
        parts = np.split(x, splits)
        s = _integrals(parts, annuli, p)
        total_d = float(s.d.sum())
        energy = 0.5 * s.n.sum() + 0.25 * b * total_d**2 - s.ell.sum() / p
        f = s.n + b * s.d * total_d - s.ell
        q = f / s.ell
        margin = np.minimum(2.0 * s.n - (4.0 - p) * s.ell, 0.0) / (2.0 * s.n)
        weight = rho * e_ref
        value = energy + weight * float(np.sum(q**2) + np.sum(margin**2))
        grads = []
        for i in range(len(parts)):
            g = (
                0.5 * s.grad_n[i]
                + 0.5 * b * total_d * s.grad_d[i]
                - s.grad_ell[i] / p
            )
            # d f_j / d v_i for every j, then through q_j = f_j / ell_j
            g += weight * 2.0 * q[i] * (
                (s.grad_n[i] - s.grad_ell[i] + b * total_d * s.grad_d[i]) / s.ell[i]
                - f[i] * s.grad_ell[i] / s.ell[i] ** 2
            )
            g += weight * 2.0 * b * s.grad_d[i] * float(np.sum(q * s.d / s.ell))
            if margin[i] < 0:
                local = 2.0 * s.n[i] - (4.0 - p) * s.ell[i]
                dm = (2.0 * s.grad_n[i] - (4.0 - p) * s.grad_ell[i]) / (
                    2.0 * s.n[i]
                ) - local * s.grad_n[i] / (2.0 * s.n[i] ** 2)
                g += weight * 2.0 * margin[i] * dm
            grads.append(g)
        return float(value), np.concatenate(grads)

    rho = PENALTY_SCHEDULE[0]
    for rho in PENALTY_SCHEDULE:
        with np.errstate(all="ignore"):
            sol = minimize(
                objective,
                x,
                args=(rho,),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-10},
            )
        if not np.all(np.isfinite(sol.x)) or not math.isfinite(float(sol.fun)):
            raise OracleUnavailableError(
                message=f"Penalty continuation diverged at rho = {rho:g}",
                details={"rho": rho},
            )
        x = np.asarray(sol.x, dtype=np.float64)
        logger.debug(f"Penalty oracle rho={rho:g}: objective {float(sol.fun):.12g}")

    parts = np.split(x, splits)
    if any(not np.any(v) for v in parts):
        raise OracleUnavailableError(
            message="Penalty minimizer lost a component", details={"rho": rho}
        )
    ints = _integrals(parts, annuli, p)
    constraint = ints.n + b * ints.d * ints.d.sum() - ints.ell
    residual = float(np.max(np.abs(constraint) / ints.ell))
    t = _project(ints, b, p)
    if np.any(2.0 * t**2 * ints.n - (4.0 - p) * t**p * ints.ell <= 0):
        raise OracleUnavailableError(
            message="Penalty minimizer projected outside the local-maximum set"
        )
    scaled_d = float(np.dot(t**2, ints.d))
    energy = float(
        0.5 * np.dot(t**2, ints.n)
        + 0.25 * b * scaled_d**2
        - np.dot(t**p, ints.ell) / p
    )
    return PenaltyResult(energy, rho, residual, t)


# ---------------------------------------------------------------------------
# Piecewise-linear quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseIntegrals:
    """Integrals over [t_0, t_M] against t^2 dt, without the 4 pi factor."""

    mass: float
    dirichlet: float
    lp: float


def piecewise_quadrature_oracle(
    breakpoints: FloatArray, values: FloatArray, p: float
) -> PiecewiseIntegrals:
    """Exact polynomial integrals of a piecewise-linear profile.

    int u^2 t^2 and int u'^2 t^2 are integrated in closed form cell by cell;
    int |u|^p t^2 goes through adaptive quadrature split at zero crossings.
    """
    t = np.asarray(breakpoints, dtype=np.float64)
    u = np.asarray(values, dtype=np.float64)
    weight = Polynomial([0.0, 0.0, 1.0])
    mass = dirichlet = lp = 0.0
    for a, b, ua, ub in zip(t[:-1], t[1:], u[:-1], u[1:], strict=True):
        slope = (ub - ua) / (b - a)
        line = Polynomial([ua - slope * a, slope])
        antiderivative = (line**2 * weight).integ()
        mass += float(antiderivative(b) - antiderivative(a))
        dirichlet += slope**2 * (b**3 - a**3) / 3.0
        pieces = [a, b]
        if ua * ub < 0:
            pieces.insert(1, a - ua / slope)
        for lo, hi in itertools.pairwise(pieces):
            value, _ = quad(
                lambda x: abs(line(x)) ** p * x**2,
                lo,
                hi,
                epsabs=0.0,
                epsrel=1e-12,
                limit=200,
            )
            lp += value
    return PiecewiseIntegrals(mass, dirichlet, lp)
