"""Radial meshes with the 3-D volume weight, quadrature and field transport."""

from collections.abc import Callable
from dataclasses import dataclass
from enum import StrEnum
import math

from loguru import logger
import numpy as np

from src.core.exceptions import MeshError, ValidationError
from src.models.fields import AnnularField, NodalCandidate, RadialMesh
from src.models.problem import FloatArray, RadiiVector

FOUR_PI = 4.0 * math.pi
DEFAULT_QUADRATURE_POINTS = 4
MIN_CELLS_PER_ANNULUS = 4
# Gaps at or below this multiple of eps*R are treated as degenerate
DEGENERATE_GAP_FACTOR = 1e3


class GradingKind(StrEnum):
    UNIFORM = "uniform"
    GEOMETRIC = "geometric"


@dataclass(frozen=True)
class Grading:
    """Cell-size law inside each annulus.

    ``geometric`` with ratio rho makes consecutive widths shrink by rho when
    approaching an interior junction.
    """

    kind: GradingKind = GradingKind.UNIFORM
    ratio: float = 1.0

    @classmethod
    def parse(cls, spec: str) -> "Grading":
        """Parse ``uniform`` or ``geometric:<ratio>``."""
        kind, _, arg = spec.partition(":")
        if kind == GradingKind.UNIFORM and not arg:
            return cls()
        if kind == GradingKind.GEOMETRIC:
            try:
                ratio = float(arg)
            except ValueError:
                ratio = 0.0
            if ratio >= 1.0:
                return cls(GradingKind.GEOMETRIC, ratio)
        raise ValidationError(
            message="grading must be 'uniform' or 'geometric:<ratio>' with ratio >= 1",
            details={"grading": spec},
        )

    @property
    def spec(self) -> str:
        if self.kind is GradingKind.UNIFORM:
            return "uniform"
        return f"geometric:{self.ratio!r}"


def _relative_widths(
    cells: int, grading: Grading, *, toward_left: bool, toward_right: bool
) -> FloatArray:
    j = np.arange(cells, dtype=np.float64)
    if grading.kind is GradingKind.UNIFORM or grading.ratio == 1.0:
        return np.ones(cells)
    if toward_left and toward_right:
        return grading.ratio ** np.minimum(j, cells - 1 - j)
    if toward_left:
        return grading.ratio**j
    if toward_right:
        return grading.ratio ** (cells - 1 - j)
    return np.ones(cells)


def build_mesh(
    radii: RadiiVector,
    cells_per_annulus: int,
    grading: Grading | None = None,
    quadrature_points: int = DEFAULT_QUADRATURE_POINTS,
) -> RadialMesh:
    """Build a mesh whose nodes contain every junction radius.

    Args:
        radii: Interior radii and outer radius R.
        cells_per_annulus: Number of cells in each annulus.
        grading: Cell-size law, uniform by default.
        quadrature_points: Gauss-Legendre points per cell.

    Returns:
        The mesh with volume-weighted quadrature attached.

    Raises:
        MeshError: If an annulus is degenerate or has fewer than four cells.
    """
    if cells_per_annulus < MIN_CELLS_PER_ANNULUS:
        raise MeshError(
            message=f"cells_per_annulus must be at least {MIN_CELLS_PER_ANNULUS}",
            details={"cells_per_annulus": cells_per_annulus},
        )
    grading = grading or Grading()
    edges = radii.edges
    floor = DEGENERATE_GAP_FACTOR * np.finfo(np.float64).eps * radii.outer
    num_annuli = edges.size - 1

    pieces: list[FloatArray] = [np.array([0.0])]
    junctions = [0]
    for i in range(1, num_annuli + 1):
        a, b = float(edges[i - 1]), float(edges[i])
        if b - a <= floor:
            raise MeshError(
                message=f"Annulus {i} is degenerate (gap {b - a:.3e})",
                details={"annulus": i, "gap": b - a},
            )
        widths = _relative_widths(
            cells_per_annulus,
            grading,
            toward_left=i >= 2,  # noqa: PLR2004
            toward_right=i <= num_annuli - 1,
        )
        inner = a + (b - a) * np.cumsum(widths)[:-1] / widths.sum()
        pieces.append(np.concatenate([inner, [b]]))
        junctions.append(junctions[-1] + cells_per_annulus)
    nodes = np.concatenate(pieces)

    cell_annulus = np.repeat(np.arange(1, num_annuli + 1), cells_per_annulus)
    return _attach_quadrature(
        radii, nodes, tuple(junctions), cell_annulus, quadrature_points
    )


def _attach_quadrature(
    radii: RadiiVector,
    nodes: FloatArray,
    junctions: tuple[int, ...],
    cell_annulus: np.ndarray,
    quadrature_points: int,
) -> RadialMesh:
    ref_points, ref_weights = np.polynomial.legendre.leggauss(quadrature_points)
    left, right = nodes[:-1, None], nodes[1:, None]
    width = right - left
    points = left + 0.5 * width * (ref_points[None, :] + 1.0)
    weights = FOUR_PI * 0.5 * width * ref_weights[None, :] * points**2
    return RadialMesh(
        radii=radii,
        nodes=nodes,
        junction_nodes=junctions,
        cell_annulus=cell_annulus.astype(np.int_),
        quad_points=points,
        quad_weights=weights,
        basis_left=(right - points) / width,
        basis_right=(points - left) / width,
    )


def mesh_from_nodes(
    radii: RadiiVector,
    nodes: FloatArray,
    quadrature_points: int = DEFAULT_QUADRATURE_POINTS,
) -> RadialMesh:
    """Mesh on given nodes 0 = t_0 < ... < t_M = R; every radius must be a node.

    Raises:
        MeshError: If the nodes are unordered or miss a junction.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    if nodes[0] != 0.0 or nodes[-1] != radii.outer or np.any(np.diff(nodes) <= 0):
        raise MeshError(
            message="Nodes must increase strictly from 0 to R",
            details={"num_nodes": int(nodes.size)},
        )
    positions = np.searchsorted(nodes, radii.edges)
    missing = [
        float(r) for r, j in zip(radii.edges, positions, strict=True)
        if j >= nodes.size or nodes[j] != r
    ]
    if missing:
        raise MeshError(
            message="Every nodal radius must be a mesh node",
            details={"missing": missing},
        )
    junctions = tuple(int(j) for j in positions)
    cell_annulus = np.repeat(np.arange(1, len(junctions)), np.diff(positions))
    return _attach_quadrature(radii, nodes, junctions, cell_annulus, quadrature_points)


def refine_mesh(mesh: RadialMesh) -> RadialMesh:
    """Halve every cell; junctions stay nodes."""
    mid = 0.5 * (mesh.nodes[:-1] + mesh.nodes[1:])
    nodes = np.empty(2 * mesh.nodes.size - 1)
    nodes[0::2] = mesh.nodes
    nodes[1::2] = mid
    junctions = tuple(2 * j for j in mesh.junction_nodes)
    cell_annulus = np.repeat(mesh.cell_annulus, 2)
    return _attach_quadrature(
        mesh.radii, nodes, junctions, cell_annulus, mesh.quad_points.shape[1]
    )


def values_at_quadrature(mesh: RadialMesh, u: FloatArray) -> FloatArray:
    """Evaluate the piecewise-linear interpolant of nodal ``u`` at quadrature points."""
    return u[:-1, None] * mesh.basis_left + u[1:, None] * mesh.basis_right


def integrate(
    mesh: RadialMesh, integrand: Callable[[FloatArray], FloatArray] | FloatArray
) -> float:
    """Return 4*pi * sum_q w_q f(t_q) t_q^2.

    ``integrand`` is either a callable of the radial variable or a nodal vector
    whose piecewise-linear interpolant is integrated.
    """
    if callable(integrand):
        values = integrand(mesh.quad_points)
    else:
        values = values_at_quadrature(mesh, np.asarray(integrand, dtype=np.float64))
    return float(np.sum(mesh.quad_weights * values))


def interpolate(
    nodes: FloatArray, values: FloatArray, targets: FloatArray
) -> FloatArray:
    """Piecewise-linear interpolation of (nodes, values) at ``targets``."""
    return np.interp(targets, nodes, values)


def transport_component(component: AnnularField, mesh: RadialMesh) -> AnnularField:
    """Affinely reparametrize a component onto the same annulus of another mesh."""
    old_edges = component.mesh.radii.edges
    new_edges = mesh.radii.edges
    i = component.index
    a, b = old_edges[i - 1], old_edges[i]
    a_new, b_new = new_edges[i - 1], new_edges[i]
    targets = mesh.nodes[mesh.annulus_slice(i)]
    pulled_back = a + (targets - a_new) * (b - a) / (b_new - a_new)
    values = interpolate(component.nodes, component.values, pulled_back)
    values[-1] = 0.0
    if i >= 2:  # noqa: PLR2004
        values[0] = 0.0
    return AnnularField(i, mesh, values)


def transport_candidate(candidate: NodalCandidate, mesh: RadialMesh) -> NodalCandidate:
    """Move every component onto the matching annulus of ``mesh``."""
    if candidate.k != mesh.num_annuli - 1:
        raise ValidationError(
            message="Cannot transport between meshes with different annulus counts",
            details={"from": candidate.k, "to": mesh.num_annuli - 1},
        )
    logger.debug(f"Transporting candidate to radii {mesh.radii.interior}")
    return NodalCandidate(
        mesh, tuple(transport_component(c, mesh) for c in candidate.components)
    )
