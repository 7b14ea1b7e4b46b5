"""Projection of candidates onto the constrained Nehari set.

A candidate enters only through its component summaries (n_i, d_i, l_i), so
every solve here is a small algebraic problem in the scaling tuple t.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
import math

from loguru import logger
import numpy as np
from scipy.optimize import brentq

from src.core.exceptions import (
    ConstraintViolationError,
    HomotopyStallError,
    InadmissibleComponentError,
    PreconditionError,
    ProjectionError,
)
from src.models.fields import NodalCandidate
from src.models.problem import FloatArray, ProblemParams
from src.services.functional import component_integrals

# Slack on t <= 1 for dominated projections
DOMINATED_SLACK = 1e-12


@dataclass(frozen=True)
class ComponentSummary:
    """n = ||u_i||_i^2, d = int |grad u_i|^2, ell = int |u_i|^p."""

    n: float
    d: float
    ell: float

    def precondition_ratio(self, p: float) -> float:
        """(int |u_i|^p)^(2/p) / ||u_i||_i^2."""
        return self.ell ** (2.0 / p) / self.n


@dataclass(frozen=True)
class NehariOptions:
    residual_tol: float = 1e-10
    newton_tol: float = 1e-13
    max_newton_iterations: int = 60
    mu_step: float = 0.25
    mu_floor: float = 1e-4
    bracket_factor: float = 1e-8
    sobolev_constant: float | None = None


@dataclass(frozen=True)
class NehariProjection:
    """Accepted scaling tuple with its diagnostics."""

    scalings: FloatArray
    mu: float
    residuals: FloatArray
    margins: FloatArray
    thresholds: FloatArray
    summaries: tuple[ComponentSummary, ...]
    newton_iterations: int = 0
    homotopy_steps: int = 0
    direct: bool = False

    @property
    def accepted(self) -> bool:
        return self.mu == 1.0 and bool(np.all(self.margins > 0))

    def apply(self, candidate: NodalCandidate) -> NodalCandidate:
        return candidate.scaled(self.scalings)


@dataclass(frozen=True)
class _Arrays:
    n: FloatArray
    d: FloatArray
    ell: FloatArray

    @classmethod
    def of(cls, summaries: Sequence[ComponentSummary]) -> "_Arrays":
        return cls(
            np.array([s.n for s in summaries], dtype=np.float64),
            np.array([s.d for s in summaries], dtype=np.float64),
            np.array([s.ell for s in summaries], dtype=np.float64),
        )


def summarize(
    candidate: NodalCandidate, params: ProblemParams
) -> tuple[ComponentSummary, ...]:
    """Per-component (n, d, ell) of a candidate."""
    breakdown = component_integrals(candidate, params)
    return tuple(
        ComponentSummary(float(n), float(d), float(ell))
        for n, d, ell in zip(
            breakdown.norm_squares,
            breakdown.dirichlet,
            breakdown.lp_masses,
            strict=True,
        )
    )


# ---------------------------------------------------------------------------
# Scalar fibering map
# ---------------------------------------------------------------------------


def fibering_threshold(summary: ComponentSummary, p: float) -> float:
    """T = (2n / ((4-p) ell))^(1/(p-2)), where h' changes sign."""
    return (2.0 * summary.n / ((4.0 - p) * summary.ell)) ** (1.0 / (p - 2.0))


def fibering_h(
    summary: ComponentSummary, b: float, p: float, t: FloatArray | float
) -> FloatArray:
    """h(t) = n t^-2 + b d^2 - ell t^(p-4)."""
    t = np.asarray(t, dtype=np.float64)
    return summary.n / t**2 + b * summary.d**2 - summary.ell * t ** (p - 4.0)


def fibering_h_prime(
    summary: ComponentSummary, p: float, t: FloatArray | float
) -> FloatArray:
    t = np.asarray(t, dtype=np.float64)
    return -2.0 * summary.n / t**3 - (p - 4.0) * summary.ell * t ** (p - 5.0)


def scalar_fiber_solve(
    summary: ComponentSummary, b: float, p: float, bracket_factor: float = 1e-8
) -> tuple[float, float]:
    """Unique t in (0, T) with t^2 n + b t^4 d^2 = t^p ell.

    Returns:
        The root t and the threshold T.

    Raises:
        InadmissibleComponentError: If h(T) >= 0 or the component vanishes.
    """
    if summary.n <= 0 or summary.ell <= 0:
        raise InadmissibleComponentError(
            message="Component vanishes and cannot be scaled onto the Nehari set",
            details={"n": summary.n, "ell": summary.ell},
        )
    threshold = fibering_threshold(summary, p)
    h_threshold = float(fibering_h(summary, b, p, threshold))
    if h_threshold >= 0:
        raise InadmissibleComponentError(
            message=(
                "Inadmissible b or degenerate component: "
                f"h(T) = {h_threshold:.6e} >= 0"
            ),
            details={"h_T": h_threshold, "T": threshold, "b": b},
        )
    lower = bracket_factor * threshold
    if float(fibering_h(summary, b, p, lower)) <= 0:
        raise InadmissibleComponentError(
            message="Fibering map has no sign change in its bracket",
            details={"h_T": h_threshold, "T": threshold, "b": b},
        )
    root = brentq(
        lambda t: float(fibering_h(summary, b, p, t)),
        lower,
        threshold,
        xtol=1e-300,
        rtol=4.0 * np.finfo(np.float64).eps,
        maxiter=500,
    )
    return float(root), threshold


# ---------------------------------------------------------------------------
# Coupled scaling system
# ---------------------------------------------------------------------------


def _reduced_residual(
    t: FloatArray, a: _Arrays, b: float, p: float, mu: float
) -> FloatArray:
    coupling = float(np.sum(t**2 * a.d))
    return (
        a.n
        + b * t**2 * a.d**2
        + mu * b * a.d * (coupling - t**2 * a.d)
        - t ** (p - 2.0) * a.ell
    )


def _jacobian(t: FloatArray, a: _Arrays, b: float, p: float, mu: float) -> FloatArray:
    jac = 2.0 * mu * b * np.outer(a.d, a.d * t)
    np.fill_diagonal(jac, 2.0 * b * t * a.d**2 - (p - 2.0) * t ** (p - 3.0) * a.ell)
    return jac


def scaling_residuals(
    summaries: Sequence[ComponentSummary],
    t: FloatArray,
    b: float,
    p: float,
    mu: float = 1.0,
) -> FloatArray:
    """Relative residual of each scaling equation at the tuple ``t``."""
    a = _Arrays.of(summaries)
    t = np.asarray(t, dtype=np.float64)
    return np.abs(_reduced_residual(t, a, b, p, mu)) / (t ** (p - 2.0) * a.ell)


def margins_of(
    summaries: Sequence[ComponentSummary], t: FloatArray, p: float
) -> FloatArray:
    """m_i = 2 t_i^2 n_i - (4-p) t_i^p ell_i."""
    a = _Arrays.of(summaries)
    t = np.asarray(t, dtype=np.float64)
    return 2.0 * t**2 * a.n - (4.0 - p) * t**p * a.ell


def _newton(
    t0: FloatArray, a: _Arrays, b: float, p: float, mu: float, options: NehariOptions
) -> tuple[FloatArray, int] | None:
    """Damped Newton on the reduced system; None on failure."""
    t = t0.copy()
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        residual = _reduced_residual(t, a, b, p, mu)
        merit = float(np.linalg.norm(residual / a.n))
        for iteration in range(1, options.max_newton_iterations + 1):
            relative = np.abs(residual) / (t ** (p - 2.0) * a.ell)
            if float(np.max(relative)) <= options.newton_tol:
                return t, iteration
            try:
                step = np.linalg.solve(_jacobian(t, a, b, p, mu), -residual)
            except np.linalg.LinAlgError:
                return None
            damping = 1.0
            while True:
                trial = t + damping * step
                if np.all(trial > 0):
                    trial_residual = _reduced_residual(trial, a, b, p, mu)
                    trial_merit = float(np.linalg.norm(trial_residual / a.n))
                    if math.isfinite(trial_merit) and trial_merit < merit:
                        break
                damping *= 0.5
                if damping < 1e-10:
                    if float(np.max(relative)) <= options.residual_tol:
                        return t, iteration
                    return None
            t, residual, merit = trial, trial_residual, trial_merit
        relative = np.abs(residual) / (t ** (p - 2.0) * a.ell)
    if float(np.max(relative)) <= options.residual_tol:
        return t, options.max_newton_iterations
    return None


def _check_precondition(
    summaries: Sequence[ComponentSummary], p: float, sobolev_constant: float | None
) -> None:
    if sobolev_constant is None:
        return
    floor = 1.0 / (2.0 * sobolev_constant)
    for index, summary in enumerate(summaries, start=1):
        ratio = summary.precondition_ratio(p)
        if ratio < floor:
            logger.warning(
                f"Component {index} violates the projection precondition "
                f"({ratio:.4e} < {floor:.4e}); attempting the solve anyway"
            )


def _projection(
    summaries: tuple[ComponentSummary, ...],
    t: FloatArray,
    b: float,
    p: float,
    *,
    newton_iterations: int,
    homotopy_steps: int,
    direct: bool,
) -> NehariProjection:
    return NehariProjection(
        scalings=t,
        mu=1.0,
        residuals=scaling_residuals(summaries, t, b, p),
        margins=margins_of(summaries, t, p),
        thresholds=np.array([fibering_threshold(s, p) for s in summaries]),
        summaries=summaries,
        newton_iterations=newton_iterations,
        homotopy_steps=homotopy_steps,
        direct=direct,
    )


def solve_scaling_system(
    summaries: Sequence[ComponentSummary],
    b: float,
    p: float,
    *,
    initial: FloatArray | None = None,
    options: NehariOptions | None = None,
) -> NehariProjection:
    """Solve the coupled scaling system by continuation in the coupling weight mu.

    With ``initial`` given, a direct Newton solve of the fully coupled system
    is tried first; the mu-continuation from the decoupled roots is the
    fallback.

    Raises:
        InadmissibleComponentError: If a component has no decoupled root.
        HomotopyStallError: If the continuation step falls below the floor.
        ConstraintViolationError: If the coupled root violates a margin.
    """
    options = options or NehariOptions()
    summaries = tuple(summaries)
    a = _Arrays.of(summaries)
    _check_precondition(summaries, p, options.sobolev_constant)

    if initial is not None and np.all(np.asarray(initial) > 0):
        found = _newton(np.asarray(initial, dtype=np.float64), a, b, p, 1.0, options)
        if found is not None and np.all(margins_of(summaries, found[0], p) > 0):
            return _projection(
                summaries,
                found[0],
                b,
                p,
                newton_iterations=found[1],
                homotopy_steps=0,
                direct=True,
            )

    t = np.array(
        [scalar_fiber_solve(s, b, p, options.bracket_factor)[0] for s in summaries],
        dtype=np.float64,
    )
    if len(summaries) == 1 or b == 0.0:
        return _projection(
            summaries, t, b, p, newton_iterations=0, homotopy_steps=0, direct=False
        )

    mu = 0.0
    step = options.mu_step
    steps = 0
    total_newton = 0
    while mu < 1.0:
        target = min(1.0, mu + step)
        found = _newton(t, a, b, p, target, options)
        if found is not None:
            margins = margins_of(summaries, found[0], p)
            if np.all(margins > 0):
                t, mu = found[0], target
                total_newton += found[1]
                steps += 1
                step = min(2.0 * step, options.mu_step)
                logger.debug(f"Homotopy advanced to mu={mu:.4g}")
                continue
            if target == 1.0 and step <= options.mu_floor:
                bad = int(np.argmin(margins)) + 1
                raise ConstraintViolationError(
                    message=(
                        "Constraint (4-p) t^p ell < 2 t^2 n failed "
                        f"for component {bad}"
                    ),
                    details={"component": bad, "margins": margins.tolist()},
                )
        step *= 0.5
        if step < options.mu_floor:
            raise HomotopyStallError(
                message=f"Homotopy stalled at mu = {mu:.6g}",
                details={"mu": mu, "scalings": t.tolist()},
            )

    projection = _projection(
        summaries,
        t,
        b,
        p,
        newton_iterations=total_newton,
        homotopy_steps=steps,
        direct=False,
    )
    if not np.all(projection.margins > 0):
        bad = int(np.argmin(projection.margins)) + 1
        raise ConstraintViolationError(
            message=f"Constraint (4-p) t^p ell < 2 t^2 n failed for component {bad}",
            details={"component": bad, "margins": projection.margins.tolist()},
        )
    return projection


def coupled_nehari_solve(
    candidate: NodalCandidate,
    params: ProblemParams,
    *,
    initial: FloatArray | None = None,
    options: NehariOptions | None = None,
) -> NehariProjection:
    """Scaling tuple placing ``candidate`` on the constrained Nehari set."""
    return solve_scaling_system(
        summarize(candidate, params),
        params.b,
        params.p,
        initial=initial,
        options=options,
    )


def project_if_dominating(
    candidate: NodalCandidate,
    params: ProblemParams,
    options: NehariOptions | None = None,
) -> NehariProjection:
    """Project a candidate whose every scaling derivative at t = 1 is nonpositive.

    Raises:
        PreconditionError: If (4-p) ell_i >= 2 n_i or F_i > 0 for some component.
        ProjectionError: If the returned scaling exceeds 1.
    """
    summaries = summarize(candidate, params)
    a = _Arrays.of(summaries)
    p, b = params.p, params.b
    total_d = float(a.d.sum())
    derivative = a.n + b * a.d * total_d - a.ell
    for index in range(len(summaries)):
        if (4.0 - p) * a.ell[index] >= 2.0 * a.n[index]:
            raise PreconditionError(
                message=f"Component {index + 1} violates (4-p) int|u|^p < 2||u||^2",
                details={"component": index + 1, "inequality": "local-maximum"},
            )
        if derivative[index] > 0:
            raise PreconditionError(
                message=f"Component {index + 1} violates F_i(u) <= 0",
                details={
                    "component": index + 1,
                    "inequality": "dominance",
                    "F": float(derivative[index]),
                },
            )
    projection = solve_scaling_system(
        summaries, b, p, initial=np.ones(len(summaries)), options=options
    )
    if np.any(projection.scalings > 1.0 + DOMINATED_SLACK):
        raise ProjectionError(
            message="Projection of a dominated candidate left the unit cube",
            details={"scalings": projection.scalings.tolist()},
        )
    return projection


# ---------------------------------------------------------------------------
# Energies and membership from summaries
# ---------------------------------------------------------------------------


def fibering_energy(
    summaries: Sequence[ComponentSummary], t: FloatArray, b: float, p: float
) -> float:
    """E_b(t_1 u_1, ..., t_{k+1} u_{k+1})."""
    a = _Arrays.of(summaries)
    t = np.asarray(t, dtype=np.float64)
    dirichlet = float(np.sum(t**2 * a.d))
    return float(
        0.5 * np.sum(t**2 * a.n) + 0.25 * b * dirichlet**2 - np.sum(t**p * a.ell) / p
    )


@dataclass(frozen=True)
class NehariMembership:
    derivative_residuals: FloatArray
    margins: FloatArray
    member: bool


def nehari_membership(
    summaries: Sequence[ComponentSummary], b: float, p: float, tol: float = 1e-8
) -> NehariMembership:
    """Test the t-derivative form of the constraint set at t = 1."""
    a = _Arrays.of(summaries)
    total_d = float(a.d.sum())
    residuals = np.abs(a.n + b * a.d * total_d - a.ell) / a.ell
    margins = 2.0 * a.n - (4.0 - p) * a.ell
    member = bool(np.all(residuals <= tol) and np.all(margins > 0))
    return NehariMembership(residuals, margins, member)


# ---------------------------------------------------------------------------
# Thresholds and certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdmissibilityReport:
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
    notes: list[str] = field(default_factory=list)


def alpha_lower_bound(k: int, p: float, sobolev_constant: float) -> float:
    """(k+1) (p-2)/(4p) S_p^(p/(p-2))."""
    return (k + 1) * (p - 2.0) / (4.0 * p) * sobolev_constant ** (p / (p - 2.0))


def component_norm_lower_bound(p: float, sobolev_constant: float) -> float:
    """S_p^(p/(2(p-2)))."""
    return sobolev_constant ** (p / (2.0 * (p - 2.0)))


def b_thresholds(k: int, p: float, sobolev_constant: float) -> tuple[float, float]:
    """Return the two terms (b_lower, b_hat) whose minimum is b_*."""
    exponent = 2.0 / (p - 2.0)
    shared = (
        (p - 2.0)
        / (4.0 - p)
        * ((4.0 - p) / 2.0) ** exponent
        * (2.0 * sobolev_constant) ** (-p / (p - 2.0))
    )
    b_hat = shared / (1.0 + k * 2.0**exponent * (2.0 / (4.0 - p)) ** exponent)
    return min(shared, b_hat), b_hat


def b_star(b_lower: float, p: float, alpha: float) -> float:
    return min(b_lower, (p - 2.0) ** 2 / (8.0 * p * (4.0 - p) * alpha))


def admissibility(
    params: ProblemParams,
    candidate: NodalCandidate | None,
    sobolev_constant: float,
    alpha_estimate: float,
) -> AdmissibilityReport:
    """Evaluate the b thresholds and the per-component precondition.

    ``candidate`` may be None when only the thresholds are wanted.
    """
    p, k = params.p, params.k
    b_lower, b_hat = b_thresholds(k, p, sobolev_constant)
    alpha_prior = alpha_lower_bound(k, p, sobolev_constant)
    threshold = b_star(b_lower, p, alpha_estimate)
    floor = 1.0 / (2.0 * sobolev_constant)
    values: list[float] = []
    if candidate is not None:
        values = [s.precondition_ratio(p) for s in summarize(candidate, params)]
    notes: list[str] = []
    verdict = params.b < threshold
    if not verdict:
        notes.append(f"b = {params.b:g} is not below b* = {threshold:.6e}")
        logger.warning(notes[-1])
    return AdmissibilityReport(
        b_lower=b_lower,
        b_hat=b_hat,
        b_star=threshold,
        alpha_estimate=alpha_estimate,
        alpha_a_priori=alpha_prior,
        b_star_a_priori=b_star(b_lower, p, alpha_prior),
        precondition_values=values,
        precondition_floor=floor,
        precondition_ok=all(v >= floor for v in values),
        verdict=verdict,
        notes=notes,
    )


@dataclass(frozen=True)
class DominanceCertificates:
    m_tilde: FloatArray
    n_matrix: FloatArray
    m_tilde_row_sums: FloatArray
    n_row_sums: FloatArray

    @property
    def m_tilde_positive(self) -> bool:
        return bool(np.all(self.m_tilde_row_sums > 0))

    @property
    def n_negative(self) -> bool:
        return bool(np.all(self.n_row_sums < 0))

    @property
    def passed(self) -> bool:
        return self.m_tilde_positive and self.n_negative


def dominance_certificates(
    summaries: Sequence[ComponentSummary],
    t: FloatArray,
    b: float,
    p: float,
    mu: float = 1.0,
) -> DominanceCertificates:
    """Assemble the two dominance matrices at the scaled components."""
    a = _Arrays.of(summaries)
    t = np.asarray(t, dtype=np.float64)
    scaled_n = t**2 * a.n
    scaled_d = t**2 * a.d
    scaled_ell = t**p * a.ell
    others = scaled_d.sum() - scaled_d

    m_tilde = -2.0 * mu * b * np.outer(scaled_d, scaled_d)
    np.fill_diagonal(
        m_tilde,
        -(4.0 - p) * scaled_ell + 2.0 * scaled_n + 2.0 * mu * b * scaled_d * others,
    )
    n_matrix = 2.0 * b * np.outer(scaled_d, scaled_d)
    np.fill_diagonal(
        n_matrix,
        -2.0 * scaled_n - 2.0 * b * scaled_d * others + (4.0 - p) * scaled_ell,
    )
    return DominanceCertificates(
        m_tilde=m_tilde,
        n_matrix=n_matrix,
        m_tilde_row_sums=m_tilde.sum(axis=1),
        n_row_sums=n_matrix.sum(axis=1),
    )
