"""Unit tests for problem parameters, potentials, radii and fields."""

import numpy as np
import pytest

from src.core.exceptions import ValidationError
from src.models.fields import AnnularField, NodalCandidate
from src.models.problem import (
    ConstantPotential,
    DomainMode,
    ProblemParams,
    RadiiVector,
    TablePotential,
    parse_potential,
)
from src.services.discretization import build_mesh


class TestProblemParams:
    """Tests for ProblemParams validation."""

    def test_valid_params_record_v0(self):
        """Test that V0 is the potential minimum on [0, R]."""
        params = ProblemParams(3e-3, 3.0, ConstantPotential(2.0), 10.0, 1)
        assert params.v0 == 2.0

    @pytest.mark.parametrize("p", [2.0, 4.0, 4.5, 1.0])
    def test_rejects_p_outside_open_interval(self, p):
        """Test that p must lie strictly between 2 and 4."""
        with pytest.raises(ValidationError, match=r"p must lie in \(2,4\)"):
            ProblemParams(0.01, p, ConstantPotential(1.0), 10.0, 1)

    def test_r3_emulation_requires_p_above_three(self):
        """Test the (3,4) requirement of r3-emulation mode."""
        with pytest.raises(
            ValidationError, match=r"r3-emulation requires p in \(3,4\)"
        ):
            ProblemParams(
                0.01, 2.5, ConstantPotential(1.0), 10.0, 0, DomainMode.R3_EMULATION
            )

    def test_collects_all_violations(self):
        """Test that every violated invariant is reported at once."""
        with pytest.raises(ValidationError) as excinfo:
            ProblemParams(-1.0, 3.0, ConstantPotential(-1.0), 10.0, -2)
        violations = excinfo.value.details["violations"]
        assert isinstance(violations, list)
        assert len(violations) == 3

    def test_with_b_and_with_k_copy(self):
        """Test that with_b / with_k return modified copies."""
        params = ProblemParams(0.01, 3.0, ConstantPotential(1.0), 10.0, 1)
        assert params.with_b(0.0).b == 0.0
        assert params.with_k(3).k == 3
        assert params.b == 0.01


class TestPotentials:
    """Tests for potential parsing and evaluation."""

    def test_constant_potential(self):
        """Test value, zero derivative and spec round trip."""
        potential = parse_potential("constant:1.5")
        r = np.array([0.0, 1.0, 5.0])
        assert np.all(potential(r) == 1.5)
        derivative = potential.derivative(r)
        assert derivative is not None
        assert np.all(derivative == 0.0)
        assert parse_potential(potential.spec)(r)[0] == 1.5

    def test_table_potential_from_file(self, tmp_path):
        """Test a tabulated decreasing potential with a header line."""
        table = tmp_path / "v.csv"
        table.write_text("r,V\n0,3\n2,1\n4,1\n", encoding="utf-8")
        potential = parse_potential("table:v.csv", base_dir=tmp_path)
        assert potential(np.array([1.0]))[0] == pytest.approx(2.0)
        derivative = potential.derivative(np.array([1.0, 3.0]))
        assert derivative is not None
        assert derivative.tolist() == pytest.approx([-1.0, 0.0])
        assert potential.minimum(10.0) == pytest.approx(1.0)

    def test_table_requires_increasing_radii(self):
        """Test that unsorted tables are rejected."""
        with pytest.raises(ValidationError, match="strictly increasing"):
            TablePotential(np.array([0.0, 2.0, 1.0]), np.array([1.0, 1.0, 1.0]))

    def test_missing_table_file(self, tmp_path):
        """Test that a missing table is a validation error."""
        with pytest.raises(ValidationError, match="does not exist"):
            parse_potential("table:nope.csv", base_dir=tmp_path)

    def test_unknown_kind(self):
        """Test that only constant and table specs are accepted."""
        with pytest.raises(ValidationError, match="constant:<v>"):
            parse_potential("gaussian:1")


class TestRadiiVector:
    """Tests for RadiiVector."""

    def test_edges_and_gaps(self):
        """Test that edges include 0 and R."""
        radii = RadiiVector((2.0, 5.0), 10.0)
        assert radii.edges.tolist() == [0.0, 2.0, 5.0, 10.0]
        assert radii.gaps.tolist() == [2.0, 3.0, 5.0]
        assert radii.k == 2

    def test_rejects_unordered_radii(self):
        """Test that radii must increase strictly inside (0, R)."""
        with pytest.raises(ValidationError, match="strictly increasing"):
            RadiiVector((5.0, 2.0), 10.0)
        with pytest.raises(ValidationError):
            RadiiVector((10.0,), 10.0)

    def test_key_rounds(self):
        """Test that keys ignore differences below 12 significant digits."""
        a = RadiiVector((1.0 + 1e-15,), 10.0)
        b = RadiiVector((1.0,), 10.0)
        assert a.key() == b.key()


class TestNodalCandidate:
    """Tests for splitting and gluing candidates."""

    def test_from_glued_zeroes_junctions(self):
        """Test that components vanish on the interior junctions."""
        mesh = build_mesh(RadiiVector((4.0,), 10.0), 4)
        u = np.linspace(1.0, 0.0, mesh.num_nodes)
        u[-1] = 0.0
        candidate = NodalCandidate.from_glued(mesh, u)
        glued = candidate.glued()
        junction = mesh.junction_nodes[1]
        assert glued[junction] == 0.0
        assert glued[:junction].tolist() == u[:junction].tolist()
        assert candidate.k == 1

    def test_sign_enforcement(self):
        """Test that component i takes the sign (-1)^(i+1)."""
        mesh = build_mesh(RadiiVector((4.0,), 10.0), 4)
        u = np.ones(mesh.num_nodes)
        u[-1] = 0.0
        candidate = NodalCandidate.from_glued(mesh, u).sign_enforced()
        assert candidate.respects_signs()
        assert np.all(candidate.components[1].values <= 0.0)

    def test_component_must_vanish_on_boundary(self):
        """Test that a component with a nonzero outer value is rejected."""
        mesh = build_mesh(RadiiVector.ball(10.0), 4)
        with pytest.raises(ValidationError, match="must vanish"):
            AnnularField(1, mesh, np.ones(mesh.num_nodes))
