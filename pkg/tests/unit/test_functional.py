"""Unit tests for energies, residuals, norms and Sobolev constants."""

import math

import numpy as np
import pytest
from scipy.linalg import eigh

from src.core.exceptions import ValidationError
from src.models.fields import NodalCandidate
from src.models.problem import ConstantPotential, ProblemParams, RadiiVector
from src.services.discretization import build_mesh, refine_mesh
from src.services.functional import (
    Tridiagonal,
    component_integrals,
    energy,
    energy_gradient,
    estimate_S_q,
    field_distance,
    h_norm,
    lq_norm,
    operators_for,
    rayleigh_quotient,
    weak_residual,
)
from tests.conftest import FAST_INNER, RADIUS, make_params


def _tent(mesh):
    u = np.cos(0.5 * math.pi * mesh.nodes / mesh.radii.outer)
    u[-1] = 0.0
    return u


class TestTridiagonal:
    """Tests for the tridiagonal helper."""

    def test_matvec_and_quadratic(self):
        """Test against the dense matrix."""
        matrix = Tridiagonal(np.array([2.0, 3.0, 4.0]), np.array([-1.0, 0.5]))
        off = [-1.0, 0.5]
        dense = np.diag([2.0, 3.0, 4.0]) + np.diag(off, 1) + np.diag(off, -1)
        u = np.array([1.0, -2.0, 0.5])
        assert matrix.matvec(u) == pytest.approx(dense @ u)
        assert matrix.quadratic(u) == pytest.approx(u @ dense @ u)
        assert matrix.to_sparse().toarray() == pytest.approx(dense)

    def test_solve_on_free_nodes(self):
        """Test that fixed nodes get zero and free ones solve the subsystem."""
        matrix = Tridiagonal(np.array([2.0, 2.0, 2.0]), np.array([-1.0, -1.0]))
        free = np.array([0, 1])
        x = matrix.solve(np.array([1.0, 0.0, 5.0]), free)
        assert x[2] == 0.0
        assert x[:2] == pytest.approx([2.0 / 3.0, 1.0 / 3.0])


class TestEnergy:
    """Tests for the energy functional and its breakdown."""

    def test_zero_field(self, params0, ball_mesh):
        """Test that E_b(0) = 0."""
        assert energy(np.zeros(ball_mesh.num_nodes), ball_mesh, params0) == 0.0

    def test_breakdown_formula(self, params0, ball_mesh):
        """Test E = 1/2 sum n + b/4 D^2 - 1/p sum L."""
        candidate = NodalCandidate.from_glued(ball_mesh, _tent(ball_mesh))
        parts = component_integrals(candidate, params0)
        expected = (
            0.5 * parts.norm_squares.sum()
            + 0.25 * params0.b * parts.total_dirichlet**2
            - parts.lp_masses.sum() / params0.p
        )
        assert parts.energy == pytest.approx(expected, rel=1e-14)
        expected = parts.dirichlet + parts.potential_terms
        assert parts.norm_squares == pytest.approx(expected)

    def test_component_sums_match_glued(self, params1, annular_mesh):
        """Test that per-annulus integrals add up to the glued ones."""
        u = np.sin(math.pi * annular_mesh.nodes / 4.0)
        u[-1] = 0.0
        candidate = NodalCandidate.from_glued(annular_mesh, u)
        parts = component_integrals(candidate, params1)
        ops = operators_for(annular_mesh, params1.potential)
        glued = candidate.glued()
        assert parts.lp_masses.sum() == pytest.approx(lq_norm(glued, ops, 3.0) ** 3)
        assert parts.total_dirichlet == pytest.approx(ops.stiffness.quadratic(glued))

    def test_gradient_matches_central_differences(self, ball_mesh):
        """Test <I_b'(u), v> against central differences on 20 random pairs."""
        params = make_params(0, b=0.1)
        ops = operators_for(ball_mesh, params.potential)
        rng = np.random.default_rng(5)
        for _ in range(20):
            u, v = rng.normal(0.0, 0.5, size=(2, ball_mesh.num_nodes))
            u[-1] = v[-1] = 0.0
            exact = float(energy_gradient(u, ops, params.b, params.p) @ v)
            errors = []
            for h in (1e-3, 1e-4, 1e-5, 1e-6):
                plus = energy(u + h * v, ball_mesh, params)
                minus = energy(u - h * v, ball_mesh, params)
                errors.append(abs((plus - minus) / (2.0 * h) - exact) / abs(exact))
            assert min(errors) <= 1e-6

    def test_wrong_k(self, params0, annular_mesh):
        """Test that the candidate must match params.k."""
        zeros = np.zeros(annular_mesh.num_nodes)
        candidate = NodalCandidate.from_glued(annular_mesh, zeros)
        with pytest.raises(ValidationError, match="do not match"):
            component_integrals(candidate, params0)


class TestRayleighQuotient:
    """Tests for rayleigh_quotient."""

    @pytest.mark.parametrize("scale", [1e-3, 0.5, 7.0])
    def test_zero_homogeneous(self, ball_mesh, scale):
        """Test that the quotient ignores the amplitude."""
        ops = operators_for(ball_mesh, ConstantPotential(1.0))
        u = _tent(ball_mesh)
        assert rayleigh_quotient(scale * u, ops, 3.0) == pytest.approx(
            rayleigh_quotient(u, ops, 3.0), rel=1e-12
        )


class TestWeakResidual:
    """Tests for weak_residual."""

    def test_relative_residual_is_scale_free(self, params0, ball_mesh):
        """Test that the zero field has zero residual and others are positive."""
        zeros = np.zeros(ball_mesh.num_nodes)
        assert weak_residual(zeros, ball_mesh, params0).dual_norm == 0.0
        report = weak_residual(_tent(ball_mesh), ball_mesh, params0)
        assert report.dual_norm > 0.0
        assert report.residual[-1] == 0.0

    def test_ground_state_is_stationary(self, ground_state, params0):
        """Test that the converged k = 0 minimizer solves the discrete equation."""
        candidate = ground_state.inner.minimizer
        report = weak_residual(candidate.glued(), candidate.mesh, params0)
        assert ground_state.inner.converged
        assert report.relative <= FAST_INNER.residual_tol
        assert report.relative == pytest.approx(ground_state.inner.residual_norm)


class TestFieldDistance:
    """Tests for field_distance."""

    def test_same_function_on_refined_mesh(self, ball_mesh):
        """Test that a P1 field and its refinement are at distance zero."""
        fine = refine_mesh(ball_mesh)
        u = _tent(ball_mesh)
        u_fine = np.interp(fine.nodes, ball_mesh.nodes, u)
        potential = ConstantPotential(1.0)
        distance = field_distance(ball_mesh, u, fine, u_fine, potential)
        assert distance == pytest.approx(0.0, abs=1e-12)

    def test_matches_h_norm_of_difference(self, ball_mesh):
        """Test that on a shared mesh the distance is ||u - v||."""
        potential = ConstantPotential(1.0)
        ops = operators_for(ball_mesh, potential)
        u = _tent(ball_mesh)
        v = 0.5 * u
        assert field_distance(ball_mesh, u, ball_mesh, v, potential) == pytest.approx(
            h_norm(u - v, ops), rel=1e-12
        )


class TestEstimateSq:
    """Tests for estimate_S_q."""

    def test_q_two_is_discrete_first_eigenvalue(self, params0):
        """Test that default tolerances reach the first eigenvalue of (K + M, M)."""
        mesh = build_mesh(RadiiVector.ball(RADIUS), 64)
        ops = operators_for(mesh, params0.potential)
        free = mesh.glued_free_nodes()
        h_matrix = ops.h_inner.to_sparse().toarray()[np.ix_(free, free)]
        mass = ops.mass.to_sparse().toarray()[np.ix_(free, free)]
        lowest = eigh(h_matrix, mass, eigvals_only=True)[0]
        result = estimate_S_q(mesh, params0, 2.0)
        assert result.value == pytest.approx(lowest, rel=1e-7)
        assert result.restarts_agreement < 1e-7

    def test_q_two_matches_continuum_eigenvalue(self):
        """Test S_2 against 1 + (pi/R)^2 on 256 cells."""
        mesh = build_mesh(RadiiVector.ball(RADIUS), 256)
        params = ProblemParams(0.0, 3.0, ConstantPotential(1.0), RADIUS, 0)
        result = estimate_S_q(mesh, params, 2.0, restarts=2)
        assert result.value == pytest.approx(1.0 + (math.pi / RADIUS) ** 2, rel=1e-4)

    @pytest.mark.parametrize("q", [3.0, 4.0])
    def test_converges_with_defaults(self, params0, q):
        """Test that the default tolerance is reachable and the flow is monotone."""
        mesh = build_mesh(RadiiVector.ball(RADIUS), 64)
        result = estimate_S_q(mesh, params0, q, restarts=2)
        assert result.value > 0.0
        assert np.all(np.diff(result.history) < 0.0)
        ops = operators_for(mesh, params0.potential)
        assert rayleigh_quotient(result.profile, ops, q) == pytest.approx(
            result.value, rel=1e-9
        )

    def test_deterministic_for_fixed_seed(self, params0):
        """Test that the same seed reproduces the estimate bit for bit."""
        mesh = build_mesh(RadiiVector.ball(10.0), 16)
        first = estimate_S_q(mesh, params0, 3.0, restarts=2, seed=7, tol=1e-7)
        second = estimate_S_q(mesh, params0, 3.0, restarts=2, seed=7, tol=1e-7)
        assert first.value == second.value
        assert first.history == second.history

    @pytest.mark.parametrize("q", [1.5, 6.5])
    def test_rejects_q_out_of_range(self, params0, ball_mesh, q):
        """Test that q must lie in [2, 6]."""
        with pytest.raises(ValidationError, match=r"q must lie in \[2,6\]"):
            estimate_S_q(ball_mesh, params0, q)
