"""Energies, first variations, norms and Sobolev-type constants."""

from dataclasses import dataclass, field
from functools import lru_cache
import math

from loguru import logger
import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from src.core.exceptions import ConvergenceError, ValidationError
from src.core.rng import substream
from src.models.fields import NodalCandidate, RadialMesh
from src.models.problem import FloatArray, ProblemParams, RadialPotential, RadiiVector
from src.services.discretization import mesh_from_nodes, values_at_quadrature

Q_MIN = 2.0
Q_MAX = 6.0


@dataclass(frozen=True, eq=False)
class Tridiagonal:
    """Symmetric tridiagonal matrix stored by its diagonal and off-diagonal."""

    diag: FloatArray
    off: FloatArray

    def matvec(self, u: FloatArray) -> FloatArray:
        out = self.diag * u
        out[:-1] += self.off * u[1:]
        out[1:] += self.off * u[:-1]
        return out

    def quadratic(self, u: FloatArray) -> float:
        return float(u @ self.matvec(u))

    def scaled_sum(self, alpha: float, other: "Tridiagonal") -> "Tridiagonal":
        """Return ``alpha * self + other``."""
        return Tridiagonal(alpha * self.diag + other.diag, alpha * self.off + other.off)

    def to_sparse(self) -> sparse.csr_matrix:
        return sparse.diags(
            [self.off, self.diag, self.off], offsets=[-1, 0, 1], format="csr"
        )

    def solve(self, rhs: FloatArray, free: np.ndarray) -> FloatArray:
        """Solve on the ``free`` nodes; fixed nodes get zero."""
        matrix = self.to_sparse()[free][:, free].tocsc()
        out = np.zeros_like(rhs)
        out[free] = spsolve(matrix, rhs[free])
        return out


@dataclass(frozen=True, eq=False)
class RadialOperators:
    """Assembled stiffness and V-mass matrices of one mesh."""

    mesh: RadialMesh
    stiffness: Tridiagonal
    mass: Tridiagonal
    cell_stiffness: FloatArray
    potential_at_quad: FloatArray

    @property
    def h_inner(self) -> Tridiagonal:
        """Matrix of the H inner product (grad, grad) + (V u, u)."""
        return self.stiffness.scaled_sum(1.0, self.mass)


@lru_cache(maxsize=64)
def operators_for(mesh: RadialMesh, potential: RadialPotential) -> RadialOperators:
    """Assemble (and cache) the linear operators of ``mesh``."""
    weights = mesh.quad_weights
    widths = mesh.widths
    cell_stiffness = weights.sum(axis=1) / widths**2
    v_quad = potential(mesh.quad_points)

    def local_mass(phi_a: FloatArray, phi_b: FloatArray) -> FloatArray:
        return np.sum(weights * v_quad * phi_a * phi_b, axis=1)

    m_ll = local_mass(mesh.basis_left, mesh.basis_left)
    m_rr = local_mass(mesh.basis_right, mesh.basis_right)
    m_lr = local_mass(mesh.basis_left, mesh.basis_right)

    n = mesh.num_nodes
    k_diag = np.zeros(n)
    k_diag[:-1] += cell_stiffness
    k_diag[1:] += cell_stiffness
    m_diag = np.zeros(n)
    m_diag[:-1] += m_ll
    m_diag[1:] += m_rr
    return RadialOperators(
        mesh=mesh,
        stiffness=Tridiagonal(k_diag, -cell_stiffness),
        mass=Tridiagonal(m_diag, m_lr),
        cell_stiffness=cell_stiffness,
        potential_at_quad=v_quad,
    )


@dataclass(frozen=True)
class EnergyBreakdown:
    """Per-component integrals and the total energy E_b."""

    norm_squares: FloatArray
    dirichlet: FloatArray
    potential_terms: FloatArray
    lp_masses: FloatArray
    kirchhoff_term: float
    energy: float

    @property
    def total_dirichlet(self) -> float:
        return float(self.dirichlet.sum())


def annulus_integrals(
    u: FloatArray, ops: RadialOperators, p: float
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Per-annulus Dirichlet, V-mass and L^p integrals of a glued nodal vector."""
    mesh = ops.mesh
    values = values_at_quadrature(mesh, u)
    bins = mesh.cell_annulus - 1
    size = mesh.num_annuli
    dirichlet_cells = ops.cell_stiffness * np.diff(u) ** 2
    mass_cells = np.sum(mesh.quad_weights * ops.potential_at_quad * values**2, axis=1)
    lp_cells = np.sum(mesh.quad_weights * np.abs(values) ** p, axis=1)
    return (
        np.bincount(bins, weights=dirichlet_cells, minlength=size),
        np.bincount(bins, weights=mass_cells, minlength=size),
        np.bincount(bins, weights=lp_cells, minlength=size),
    )


def breakdown_of(
    u: FloatArray, ops: RadialOperators, b: float, p: float
) -> EnergyBreakdown:
    dirichlet, potential_terms, lp = annulus_integrals(u, ops, p)
    norms = dirichlet + potential_terms
    total_d = float(dirichlet.sum())
    kirchhoff = 0.25 * b * total_d**2
    energy = 0.5 * float(norms.sum()) + kirchhoff - float(lp.sum()) / p
    return EnergyBreakdown(norms, dirichlet, potential_terms, lp, kirchhoff, energy)


def component_integrals(
    candidate: NodalCandidate, params: ProblemParams
) -> EnergyBreakdown:
    """Integrals of every component and E_b of the candidate.

    Raises:
        ValidationError: If the candidate has the wrong number of annuli.
    """
    if candidate.k != params.k or candidate.radii.outer != params.domain_radius:
        raise ValidationError(
            message="Candidate radii do not match the problem parameters",
            details={"candidate_k": candidate.k, "k": params.k},
        )
    ops = operators_for(candidate.mesh, params.potential)
    return breakdown_of(candidate.glued(), ops, params.b, params.p)


def energy(u: FloatArray, mesh: RadialMesh, params: ProblemParams) -> float:
    """I_b of a glued nodal vector."""
    ops = operators_for(mesh, params.potential)
    return breakdown_of(u, ops, params.b, params.p).energy


def nonlinear_load(u: FloatArray, ops: RadialOperators, q: float) -> FloatArray:
    """Nodal vector of int |u|^(q-2) u phi_j."""
    mesh = ops.mesh
    values = values_at_quadrature(mesh, u)
    density = mesh.quad_weights * np.abs(values) ** (q - 2.0) * values
    out = np.zeros(mesh.num_nodes)
    out[:-1] += np.sum(density * mesh.basis_left, axis=1)
    out[1:] += np.sum(density * mesh.basis_right, axis=1)
    return out


def energy_gradient(
    u: FloatArray, ops: RadialOperators, b: float, p: float
) -> FloatArray:
    """Nodal gradient <I_b'(u), phi_j> over all nodes."""
    total_d = ops.stiffness.quadratic(u)
    return (
        (1.0 + b * total_d) * ops.stiffness.matvec(u)
        + ops.mass.matvec(u)
        - nonlinear_load(u, ops, p)
    )


def dual_norm(residual: FloatArray, ops: RadialOperators, free: np.ndarray) -> float:
    """Norm of the Riesz representative of ``residual`` in the H inner product."""
    if not np.any(residual[free]):
        return 0.0
    riesz = ops.h_inner.solve(residual, free)
    return math.sqrt(max(float(residual[free] @ riesz[free]), 0.0))


def h_norm(u: FloatArray, ops: RadialOperators) -> float:
    return math.sqrt(max(ops.h_inner.quadratic(u), 0.0))


@dataclass(frozen=True)
class WeakResidual:
    residual: FloatArray
    dual_norm: float
    relative: float


def weak_residual(
    u: FloatArray, mesh: RadialMesh, params: ProblemParams
) -> WeakResidual:
    """Residual of the full equation against every nodal basis function except at R."""
    ops = operators_for(mesh, params.potential)
    free = mesh.glued_free_nodes()
    residual = energy_gradient(u, ops, params.b, params.p)
    residual[-1] = 0.0
    norm = dual_norm(residual, ops, free)
    scale = h_norm(u, ops)
    return WeakResidual(residual, norm, norm / scale if scale > 0 else norm)


def field_distance(
    mesh_a: RadialMesh,
    u_a: FloatArray,
    mesh_b: RadialMesh,
    u_b: FloatArray,
    potential: RadialPotential,
) -> float:
    """H-norm of u_a - u_b for P1 fields on different meshes of the same ball.

    Both fields are piecewise linear on the union node set, so the distance is
    evaluated exactly there.
    """
    nodes = np.union1d(mesh_a.nodes, mesh_b.nodes)
    union = mesh_from_nodes(
        RadiiVector.ball(mesh_a.radii.outer), nodes, mesh_a.quad_points.shape[1]
    )
    diff = np.interp(nodes, mesh_a.nodes, u_a) - np.interp(nodes, mesh_b.nodes, u_b)
    return h_norm(diff, operators_for(union, potential))


@dataclass(frozen=True)
class SobolevConstants:
    """Estimated S_q with its minimizing profile."""

    q: float
    value: float
    profile: FloatArray
    iterations: int
    restarts_agreement: float
    history: list[float] = field(default_factory=list[float])


def lq_norm(u: FloatArray, ops: RadialOperators, q: float) -> float:
    values = values_at_quadrature(ops.mesh, u)
    return float(np.sum(ops.mesh.quad_weights * np.abs(values) ** q)) ** (1.0 / q)


def rayleigh_quotient(u: FloatArray, ops: RadialOperators, q: float) -> float:
    """||u||_H^2 / |u|_q^2."""
    return ops.h_inner.quadratic(u) / lq_norm(u, ops, q) ** 2


def _random_profile(mesh: RadialMesh, rng: np.random.Generator) -> FloatArray:
    t = mesh.nodes / mesh.radii.outer
    modes = np.arange(1, 5)
    amplitudes = rng.normal(size=modes.size)
    profile = np.abs(np.cos(np.outer(t, (modes - 0.5) * math.pi)) @ amplitudes)
    profile[-1] = 0.0
    return profile * math.exp(rng.normal())


@dataclass
class _QuotientRun:
    profile: FloatArray
    value: float
    iterations: int
    history: list[float]


def _minimize_quotient(
    u0: FloatArray,
    ops: RadialOperators,
    q: float,
    tol: float,
    max_iterations: int,
) -> _QuotientRun:
    """Normalized gradient flow with step 0.5/L in the H-preconditioned metric.

    L = 2 max(1, q - 1) bounds the preconditioned Hessian of the quotient on the
    unit L^q sphere. Steps are halved until the quotient strictly decreases; the
    run stops once a step lowers the quotient by at most ``tol`` relative, or when
    no step decreases it at all.
    """
    free = ops.mesh.glued_free_nodes()
    h_inner = ops.h_inner
    u = u0 / lq_norm(u0, ops, q)
    value = h_inner.quadratic(u)
    history = [value]
    step0 = 0.5 / (2.0 * max(1.0, q - 1.0))
    for iteration in range(1, max_iterations + 1):
        gradient = 2.0 * (h_inner.matvec(u) - value * nonlinear_load(u, ops, q))
        gradient[-1] = 0.0
        direction = h_inner.solve(gradient, free)
        step = step0
        while step >= 1e-12 * step0:
            trial = u - step * direction
            trial /= lq_norm(trial, ops, q)
            trial_value = h_inner.quadratic(trial)
            if trial_value < value:
                break
            step *= 0.5
        else:
            # Floating-point floor of the quotient
            return _QuotientRun(u, value, iteration, history)
        decrease = value - trial_value
        u, value = trial, trial_value
        history.append(value)
        if decrease <= tol * value:
            return _QuotientRun(u, value, iteration, history)
    raise ConvergenceError(
        message=f"S_q estimator did not converge in {max_iterations} iterations",
        details={"q": q, "last_quotient": value},
    )


def estimate_S_q(  # noqa: N802
    mesh: RadialMesh,
    params: ProblemParams,
    q: float,
    *,
    restarts: int = 5,
    seed: int = 0,
    tol: float = 1e-9,
    max_iterations: int = 20_000,
) -> SobolevConstants:
    """Minimize the Rayleigh quotient ||u||^2 / |u|_q^2 by normalized gradient flow.

    Each restart starts from a random positive profile drawn from the
    ``sobolev`` substream of ``seed``; the best restart is returned and the
    relative spread of the restart values is recorded.

    Raises:
        ValidationError: If q lies outside [2, 6].
        ConvergenceError: If a restart exhausts the iteration budget.
    """
    if not Q_MIN <= q <= Q_MAX:
        raise ValidationError(message="q must lie in [2,6]", details={"q": q})
    ops = operators_for(mesh, params.potential)
    rng = substream(seed, f"sobolev:{q!r}")
    runs = [
        _minimize_quotient(_random_profile(mesh, rng), ops, q, tol, max_iterations)
        for _ in range(restarts)
    ]
    values = [run.value for run in runs]
    best = min(runs, key=lambda run: run.value)
    agreement = (max(values) - min(values)) / min(values)
    logger.info(
        f"S_{q:g} = {best.value:.10g} ({restarts} restarts, spread {agreement:.2e})"
    )
    return SobolevConstants(
        q=q,
        value=best.value,
        profile=best.profile,
        iterations=sum(run.iterations for run in runs),
        restarts_agreement=agreement,
        history=best.history,
    )
