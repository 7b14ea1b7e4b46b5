"""Unit tests for the independent reference computations."""

import math

import numpy as np
import pytest

from src.core.exceptions import ValidationError
from src.models.fields import NodalCandidate
from src.models.problem import RadiiVector
from src.services.functional import component_integrals
from src.services.inner_solver import InnerOptions, minimize_on_nehari
from src.services.nehari import ComponentSummary, solve_scaling_system
from src.services.oracles import (
    compare,
    nehari_multistart_oracle,
    penalty_minimization_oracle,
    piecewise_quadrature_oracle,
)

FIRST = ComponentSummary(n=2.0, d=1.0, ell=3.0)
SECOND = ComponentSummary(n=1.5, d=0.8, ell=2.0)


class TestCompare:
    """Tests for compare."""

    def test_relative_discrepancy(self):
        """Test |primary - oracle| / |oracle| against the tolerance."""
        result = compare("energy", 1.01, 1.0, 0.02)
        assert result.discrepancy == pytest.approx(0.01)
        assert result.verdict
        assert not compare("energy", 1.1, 1.0, 0.02).verdict

    def test_zero_oracle_uses_floor(self):
        """Test that a zero oracle value does not divide by zero."""
        assert compare("residual", 0.0, 0.0, 1e-8).discrepancy == 0.0


class TestMultistartOracle:
    """Tests for nehari_multistart_oracle."""

    def test_agrees_with_homotopy(self):
        """Test that every admissible start converges to the homotopy tuple."""
        b, p = 0.01, 3.0
        primary = solve_scaling_system([FIRST, SECOND], b, p).scalings
        oracle = nehari_multistart_oracle([FIRST, SECOND], b, p, grid_density=5)
        assert oracle.clusters == 1
        assert oracle.converged_starts > 0
        assert oracle.total_starts == 25
        assert oracle.scalings == pytest.approx(primary, rel=1e-8)

    def test_symmetric_components(self):
        """Test that identical summaries give t_1 = t_2."""
        oracle = nehari_multistart_oracle(
            [FIRST, FIRST], 0.05, 3.0, grid_density=5, workers=2
        )
        assert oracle.scalings[0] == pytest.approx(oracle.scalings[1], rel=1e-10)

    def test_rejects_four_components(self):
        """Test the k + 1 <= 3 limit."""
        with pytest.raises(ValidationError, match="k \\+ 1 <= 3"):
            nehari_multistart_oracle([FIRST] * 4, 0.01, 3.0)


class TestPiecewiseQuadratureOracle:
    """Tests for piecewise_quadrature_oracle."""

    def test_closed_forms(self):
        """Test u = 1 - t on [0, 1]: mass 1/30, Dirichlet 1/3, cubic 1/60."""
        integrals = piecewise_quadrature_oracle(
            np.array([0.0, 0.5, 1.0]), np.array([1.0, 0.5, 0.0]), 3.0
        )
        assert integrals.mass == pytest.approx(1.0 / 30.0, rel=1e-12)
        assert integrals.dirichlet == pytest.approx(1.0 / 3.0, rel=1e-12)
        assert integrals.lp == pytest.approx(1.0 / 60.0, rel=1e-10)

    def test_sign_change_inside_a_cell(self):
        """Test int |t - 1/2|^3 t^2 over [0, 1] = 5/384."""
        integrals = piecewise_quadrature_oracle(
            np.array([0.0, 1.0]), np.array([-0.5, 0.5]), 3.0
        )
        assert integrals.lp == pytest.approx(5.0 / 384.0, rel=1e-10)

    def test_matches_mesh_integrals(self, params0, ball_mesh):
        """Test that the solver quadrature reproduces the exact integrals."""
        u = np.cos(0.5 * math.pi * ball_mesh.nodes / 10.0)
        u[-1] = 0.0
        parts = component_integrals(NodalCandidate.from_glued(ball_mesh, u), params0)
        exact = piecewise_quadrature_oracle(ball_mesh.nodes, u, params0.p)
        scale = 4.0 * math.pi
        assert parts.dirichlet[0] == pytest.approx(scale * exact.dirichlet, rel=1e-12)
        assert parts.potential_terms[0] == pytest.approx(scale * exact.mass, rel=1e-12)
        assert parts.lp_masses[0] == pytest.approx(scale * exact.lp, rel=1e-10)


class TestPenaltyOracle:
    """Tests for penalty_minimization_oracle."""

    def test_rejects_large_meshes(self, params0):
        """Test the cell limit of the dense oracle."""
        with pytest.raises(ValidationError, match="at most 32"):
            penalty_minimization_oracle(
                RadiiVector.ball(10.0), params0, cells_per_annulus=64
            )

    @pytest.mark.slow
    def test_agrees_with_inner_solve(self, params0):
        """Test the k = 0 energy against the primary solver on the same mesh."""
        options = InnerOptions(
            cells_per_annulus=16, residual_tol=1e-8, max_iterations=3000
        )
        primary = minimize_on_nehari(RadiiVector.ball(10.0), params0, options=options)
        oracle = penalty_minimization_oracle(
            RadiiVector.ball(10.0), params0, cells_per_annulus=16
        )
        assert compare("energy", primary.energy, oracle.energy, 1e-4).verdict
        assert oracle.penalty_weight == 1e6
