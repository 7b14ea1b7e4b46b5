"""Pytest configuration and shared fixtures."""

from pathlib import Path

import pytest

from src.models.problem import ConstantPotential, ProblemParams, RadiiVector
from src.services.discretization import build_mesh
from src.services.inner_solver import InnerOptions
from src.services.outer_solver import OuterOptions, OuterSolveResult, minimize_phi

# Small b keeps the k >= 1 constraint sets nonempty on R = 10
B_SMALL = 1e-3
B_TINY = 1e-4
RADIUS = 10.0


def make_params(k: int = 0, b: float = B_SMALL, p: float = 3.0) -> ProblemParams:
    return ProblemParams(
        b=b, p=p, potential=ConstantPotential(1.0), domain_radius=RADIUS, k=k
    )


FAST_INNER = InnerOptions(cells_per_annulus=24, residual_tol=1e-6, max_iterations=1500)
FAST_OUTER = OuterOptions(
    inner=FAST_INNER,
    diameter_tol=1e-3,
    max_evaluations=60,
    restarts=1,
    probe_coercivity=False,
)


@pytest.fixture
def params0() -> ProblemParams:
    """Ground-state parameters: b = 1e-3, p = 3, V = 1, R = 10."""
    return make_params(0)


@pytest.fixture
def params1() -> ProblemParams:
    return make_params(1)


@pytest.fixture
def ball_mesh():
    """Uniform 32-cell mesh of the ball of radius 10."""
    return build_mesh(RadiiVector.ball(RADIUS), 32)


@pytest.fixture
def annular_mesh():
    """Two annuli split at r = 4 with 16 cells each."""
    return build_mesh(RadiiVector((4.0,), RADIUS), 16)


@pytest.fixture(scope="session")
def ground_state() -> OuterSolveResult:
    """Converged k = 0 solution on the fast mesh (computed once)."""
    return minimize_phi(0, make_params(0), FAST_OUTER)


@pytest.fixture(scope="session")
def one_nodal() -> OuterSolveResult:
    """Optimal k = 1 solution on the fast mesh (computed once)."""
    return minimize_phi(1, make_params(1), FAST_OUTER)


@pytest.fixture
def out_dir(tmp_path: Path) -> Path:
    """Not-yet-existing output directory inside the test's temp dir."""
    return tmp_path / "out"
