"""Serializable views of solver and experiment results.

Every model reads the matching result dataclass through ``from_attributes``
so the services stay free of pydantic.
"""

from pydantic import BaseModel, ConfigDict


class ReportModel(BaseModel):
    """Base for archived reports; non-finite floats survive the JSON round trip."""

    model_config = ConfigDict(from_attributes=True, ser_json_inf_nan="constants")


class ProbeModel(ReportModel):
    label: str
    radii: list[float]
    phi: float
    exceeds_optimum: bool


class JunctionJumpModel(ReportModel):
    radius: float
    left_slope: float
    right_slope: float
    jump: float
    relative: float


class SolveReportModel(ReportModel):
    """Diagnostics of one glued k-nodal solution."""

    k: int
    radii: list[float]
    outer_radius: float
    energy: float
    sign_changes: int
    sign_changes_ok: bool
    weak_residual: float
    component_residuals: list[float]
    jumps: list[JunctionJumpModel]
    max_relative_jump: float
    margins: list[float]
    scalings: list[float]
    norm_squares: list[float]
    inner_status: str
    inner_iterations: int
    evaluations: int
    boundary_flagged: bool
    probes: list[ProbeModel]


class SobolevModel(ReportModel):
    q: float
    value: float
    iterations: int
    restarts_agreement: float


class AdmissibilityModel(ReportModel):
    b_lower: float
    b_hat: float
    b_star: float
    alpha_estimate: float
    alpha_a_priori: float
    b_star_a_priori: float
    precondition_values: list[float]
    precondition_floor: float
    precondition_ok: bool
    verdict: bool
    notes: list[str] = []


class CertificatesModel(ReportModel):
    """Dominance matrices flattened to nested lists."""

    m_tilde: list[list[float]]
    n_matrix: list[list[float]]
    m_tilde_row_sums: list[float]
    n_row_sums: list[float]
    m_tilde_positive: bool
    n_negative: bool
    passed: bool


class ComparisonModel(ReportModel):
    label: str
    lhs: float
    rhs: float
    margin: float
    verdict: bool | None


class MonotonicityRowModel(ReportModel):
    k: int
    energy: float
    solved: bool
    radii: list[float] = []


class MonotonicityModel(ReportModel):
    rows: list[MonotonicityRowModel]
    pairwise: list[ComparisonModel]
    multiples: list[ComparisonModel]
    reduced_radii: list[ComparisonModel] = []
    component_ground_state: list[ComparisonModel] = []
    passed: bool


class LimitRowModel(ReportModel):
    b: float
    energy: float
    distance: float
    sign_changes: int
    radii: list[float]
    solved: bool


class LimitStudyModel(ReportModel):
    k: int
    rows: list[LimitRowModel]
    distances_decreasing: bool
    energies_decreasing: bool
    sign_changes_constant: bool
    flagged: bool
    notes: list[str] = []
    passed: bool


class PohozaevModel(ReportModel):
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


class BoundRowModel(ReportModel):
    k: int
    component: int
    quantity: str
    value: float
    bound: float
    strict_ok: bool
    loose_ok: bool


class BoundsModel(ReportModel):
    sobolev_constant: float
    rows: list[BoundRowModel]
    strauss_fitted: float | None
    strauss_analytic: float
    strauss_ratios: dict[int, float]
    strauss_ok: bool | None
    strict_ok: bool
    loose_ok: bool


class RefinementModel(ReportModel):
    quantity: str
    cells: list[int]
    values: list[float]
    ratios: list[float]
    decreasing: bool
    ratio_band: tuple[float, float] | None = None
    rates_in_band: bool
    passed: bool


class ContinuityModel(ReportModel):
    base: list[float]
    base_phi: float
    deltas: list[float]
    values: list[float]
    ratios: list[float]
    ratio_spread: float


class ProbeDiagnosticsModel(ReportModel):
    """Jumps at the optimum and at perturbed radii, plus the continuity probe."""

    k: int
    jumps: dict[str, float]
    jumps_exceed_optimum: bool
    continuity: ContinuityModel


class OracleComparisonModel(ReportModel):
    quantity: str
    primary: float
    oracle: float
    discrepancy: float
    tolerance: float
    verdict: bool


class NehariCheckModel(ReportModel):
    """Projection of a stored candidate with its certificates."""

    k: int
    scalings: list[float]
    margins: list[float]
    residuals: list[float]
    thresholds: list[float]
    mu: float
    newton_iterations: int
    homotopy_steps: int
    member_at_projection: bool
    certificates: CertificatesModel
    admissibility: AdmissibilityModel
    oracle_clusters: int | None = None
    oracle: list[OracleComparisonModel] = []
