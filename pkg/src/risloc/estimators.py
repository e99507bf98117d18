"""Inference: grid localizer, l1 mask recovery, and both joint estimators.

The fixed-mask localizer performs a concentrated least-squares search over a
spherical grid (distance x azimuth x elevation about the RIS center) with a
closed-form channel gain per grid point, followed by multi-level local grid
refinement.  Both joint localization / failure diagnosis (JLFD) algorithms
alternate between mask estimation and this localizer.
"""

from __future__ import annotations

import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .scene import (
    FailureMask,
    PhaseSchedule,
    Scenario,
    failure_coeff_pdf,
    fault_system_matrix,
    steering_vector,
)

# Grid distances are clamped away from the RIS center, where the steering
# vector is undefined.
MIN_GRID_DISTANCE = 1e-3


class NonIdentifiableError(ValueError):
    """The assumed mask nulls the whole observation model."""


@dataclass(frozen=True)
class GridSpec:
    """Spherical search grid about the RIS center.

    ``points_per_axis`` applies to azimuth and elevation (and, unless
    ``distance_slices`` is set, to distance as well).  The coarse search
    scans all azimuth x elevation cells per distance slice; refinement
    shrinks a local window around the incumbent by a factor of 10 per level.
    """

    distance_range: Tuple[float, float]
    azimuth_range: Tuple[float, float]
    elevation_range: Tuple[float, float]
    points_per_axis: int
    refine_levels: int = 2
    distance_slices: Optional[int] = None
    refine_points: int = 21

    def __post_init__(self):
        if self.points_per_axis < 2:
            raise ValueError("points_per_axis must be >= 2")
        for lo, hi in (self.distance_range, self.azimuth_range, self.elevation_range):
            if not hi > lo:
                raise ValueError("grid ranges must be nonempty")
        if self.distance_slices is not None and self.distance_slices < 1:
            raise ValueError("distance_slices must be >= 1")

    @property
    def num_distance_slices(self) -> int:
        return self.distance_slices or self.points_per_axis

    def axes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = np.linspace(
            max(self.distance_range[0], MIN_GRID_DISTANCE),
            self.distance_range[1],
            self.num_distance_slices,
        )
        az = np.linspace(*self.azimuth_range, self.points_per_axis)
        el = np.linspace(*self.elevation_range, self.points_per_axis)
        return r, az, el


def room_grid() -> GridSpec:
    """Default large-scale search grid: 50 m range, quadrant angles, K = 501."""
    return GridSpec(
        distance_range=(0.0, 50.0),
        azimuth_range=(0.0, np.pi / 2),
        elevation_range=(0.0, np.pi / 2),
        points_per_axis=501,
    )


def spherical_to_cartesian(r, az, el, center) -> np.ndarray:
    """Map (distance, azimuth, polar-from-broadside) to a point about center."""
    r = np.asarray(r, dtype=float)
    az = np.asarray(az, dtype=float)
    el = np.asarray(el, dtype=float)
    u = np.stack(
        [np.sin(el) * np.cos(az), np.sin(el) * np.sin(az), np.cos(el)], axis=-1
    )
    return np.asarray(center) + r[..., None] * u


@dataclass
class Estimate:
    """Output of a joint localization / failure diagnosis run."""

    alpha_hat: complex
    p_hat: np.ndarray
    m_hat: np.ndarray
    failing_set: List[int]
    per_iteration_trace: List[Tuple[int, np.ndarray, np.ndarray, Optional[int]]]
    info: Dict = field(default_factory=dict)


@dataclass(frozen=True)
class HypothesisCost:
    """Cost of the "element k fails" hypothesis (k = 0 means no new failure)."""

    k: int
    cost: float
    zeta_hat: Optional[complex]


@dataclass
class LocalizeResult:
    alpha_hat: complex
    p_hat: np.ndarray
    residual: float
    spherical: Tuple[float, float, float]
    tie: bool
    num_residual_evals: int


# ---------------------------------------------------------------------------
# Grid search context (cached per geometry + grid)
# ---------------------------------------------------------------------------

# Cells-times-elements budget above which coarse responses are recomputed
# per call instead of cached.
_CACHE_ENTRY_LIMIT = 8_000_000
_context_cache: "OrderedDict[tuple, _GridContext]" = OrderedDict()
_CACHE_MAX_ENTRIES = 4


@dataclass
class _GridContext:
    r_values: np.ndarray
    az_values: np.ndarray
    el_values: np.ndarray
    # coarse combined responses per distance slice, each (N, K*K); None when
    # the grid is too large to cache.
    slice_responses: Optional[List[np.ndarray]]


def _combined_response_block(points: np.ndarray, scenario: Scenario) -> np.ndarray:
    """(N, num_points) combined responses for a block of field points."""
    diff = points[:, None, :] - scenario.element_positions[None, :, :]
    d_n = np.linalg.norm(diff, axis=2)  # (P, N)
    d_c = np.linalg.norm(points - scenario.p_ris, axis=1)  # (P,)
    a = np.exp(-2j * np.pi / scenario.wavelength * (d_n - d_c[:, None]))
    a_bs = steering_vector(scenario.p_bs, scenario)
    return (a * a_bs[None, :]).T


def _slice_points(ctx: _GridContext, r: float, center: np.ndarray) -> np.ndarray:
    az, el = np.meshgrid(ctx.az_values, ctx.el_values, indexing="ij")
    return spherical_to_cartesian(
        np.full(az.size, r), az.ravel(), el.ravel(), center
    )


def _grid_context(scenario: Scenario, grid: GridSpec) -> _GridContext:
    key = (scenario.geometry_key(), grid)
    if key in _context_cache:
        _context_cache.move_to_end(key)
        return _context_cache[key]
    r, az, el = grid.axes()
    n_cells = r.size * az.size * el.size
    responses: Optional[List[np.ndarray]] = None
    if n_cells * scenario.num_elements <= _CACHE_ENTRY_LIMIT:
        ctx_tmp = _GridContext(r, az, el, None)
        responses = [
            _combined_response_block(
                _slice_points(ctx_tmp, ri, scenario.p_ris), scenario
            )
            for ri in r
        ]
    ctx = _GridContext(r, az, el, responses)
    _context_cache[key] = ctx
    while len(_context_cache) > _CACHE_MAX_ENTRIES:
        _context_cache.popitem(last=False)
    return ctx


def _concentrated_scores(
    wm: np.ndarray, responses: np.ndarray, y: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-cell |h^H y|^2 / ||h||^2 scores with the cross terms needed for alpha.

    ``wm`` is S Phi^T diag(m) (T x N); ``responses`` holds b(p) per cell.
    """
    h = wm @ responses  # (T, cells)
    cross = h.conj().T @ y  # h^H y per cell
    hh = np.einsum("tc,tc->c", h.conj(), h).real
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(hh > 0, np.abs(cross) ** 2 / np.where(hh > 0, hh, 1.0), -np.inf)
    return score, cross, hh


def localize_fixed_mask(
    y: np.ndarray,
    schedule: PhaseSchedule,
    mask_assumed: np.ndarray,
    grid: GridSpec,
    scenario: Scenario,
    early_stop_rel: float = 1e-13,
) -> LocalizeResult:
    """Concentrated least-squares localization for a fixed assumed mask.

    For each grid point p the gain alpha(p) = h^H y / ||h||^2 is optimal in
    closed form, leaving the concentrated residual ||y||^2 - |h^H y|^2/||h||^2
    to be minimized over the grid; the coarse winner is then refined on
    shrinking local grids.
    """
    y = np.asarray(y, dtype=complex).reshape(-1)
    mask_assumed = np.asarray(mask_assumed, dtype=complex).reshape(-1)
    if not (np.isfinite(y).all() and np.isfinite(mask_assumed).all()):
        raise ValueError("non-finite observation or mask")
    ctx = _grid_context(scenario, grid)
    wm = scenario.pilots[:, None] * schedule.phi.T * mask_assumed[None, :]
    y_energy = float(np.vdot(y, y).real)

    best_score = -np.inf
    best = None  # (slice_idx, cell_idx, cross, hh)
    tie = False
    evals = 0
    any_valid = False
    for si, ri in enumerate(ctx.r_values):
        if ctx.slice_responses is not None:
            resp = ctx.slice_responses[si]
        else:
            resp = _combined_response_block(
                _slice_points(ctx, ri, scenario.p_ris), scenario
            )
        score, cross, hh = _concentrated_scores(wm, resp, y)
        evals += score.size
        any_valid = any_valid or (hh > 0).any()
        ci = int(np.argmax(score))
        s = score[ci]
        if s > best_score:
            n_at = int(np.count_nonzero(np.isclose(score, s, rtol=1e-12, atol=0.0)))
            tie = n_at > 1
            best_score = s
            best = (si, ci, cross[ci], hh[ci])
        elif best is not None and np.isclose(s, best_score, rtol=1e-12, atol=0.0):
            tie = True
        # coarse pass terminates early once an (essentially) exact fit is found
        if y_energy > 0 and y_energy - best_score <= early_stop_rel * y_energy:
            break
    if not any_valid:
        raise NonIdentifiableError("assumed mask nulls the model for every grid point")
    if best is None or not np.isfinite(best_score):
        raise NonIdentifiableError("no valid grid cell")

    si, ci, cross, hh = best
    n_el = ctx.el_values.size
    r0 = float(ctx.r_values[si])
    az0 = float(ctx.az_values[ci // n_el])
    el0 = float(ctx.el_values[ci % n_el])

    # local refinement: window = coarse spacing, shrinking 10x per level
    def axis_spacing(vals):
        return float(vals[1] - vals[0]) if vals.size > 1 else 0.0

    windows = np.array(
        [
            axis_spacing(ctx.r_values),
            axis_spacing(ctx.az_values),
            axis_spacing(ctx.el_values),
        ]
    )
    center = np.array([r0, az0, el0])
    best_cross, best_hh, best_sph = cross, hh, center.copy()
    best_ref_score = best_score
    lo = np.array(
        [
            max(grid.distance_range[0], MIN_GRID_DISTANCE),
            grid.azimuth_range[0],
            grid.elevation_range[0],
        ]
    )
    hi = np.array(
        [grid.distance_range[1], grid.azimuth_range[1], grid.elevation_range[1]]
    )
    npts = grid.refine_points
    for _ in range(grid.refine_levels):
        axes = []
        for a in range(3):
            if windows[a] == 0.0:
                axes.append(np.array([center[a]]))
            else:
                axes.append(
                    np.clip(
                        np.linspace(center[a] - windows[a], center[a] + windows[a], npts),
                        lo[a],
                        hi[a],
                    )
                )
        rr, aa, ee = np.meshgrid(*axes, indexing="ij")
        pts = spherical_to_cartesian(rr.ravel(), aa.ravel(), ee.ravel(), scenario.p_ris)
        resp = _combined_response_block(pts, scenario)
        score, cross_v, hh_v = _concentrated_scores(wm, resp, y)
        evals += score.size
        ci = int(np.argmax(score))
        if score[ci] > best_ref_score:
            best_ref_score = float(score[ci])
            best_cross, best_hh = cross_v[ci], hh_v[ci]
            best_sph = np.array([rr.ravel()[ci], aa.ravel()[ci], ee.ravel()[ci]])
        center = best_sph.copy()
        windows = windows / 10.0

    alpha_hat = best_cross / best_hh if best_hh > 0 else 0.0 + 0j
    p_hat = spherical_to_cartesian(best_sph[0], best_sph[1], best_sph[2], scenario.p_ris)
    residual = max(y_energy - best_ref_score, 0.0)
    return LocalizeResult(
        alpha_hat=complex(alpha_hat),
        p_hat=p_hat,
        residual=float(residual),
        spherical=(float(best_sph[0]), float(best_sph[1]), float(best_sph[2])),
        tie=tie,
        num_residual_evals=evals,
    )


# ---------------------------------------------------------------------------
# l1 mask recovery (ISTA)
# ---------------------------------------------------------------------------

def _soft_threshold(u: np.ndarray, tau: float) -> np.ndarray:
    """Complex soft thresholding: magnitude shrinkage, phase preserved."""
    mag = np.abs(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > 0, np.maximum(0.0, 1.0 - tau / np.where(mag > 0, mag, 1.0)), 0.0)
    return u * scale


def lasso_mask(
    y: np.ndarray,
    alpha: complex,
    p: np.ndarray,
    schedule: PhaseSchedule,
    scenario: Scenario,
    xi: float,
    max_iter: int = 2000,
    tol: float = 1e-8,
) -> np.ndarray:
    """Solve min_m ||y - A(alpha, p) m||^2 + xi ||m - 1||_1 via ISTA.

    The problem is shifted to u = m - 1 so the l1 penalty is a plain
    soft-threshold; the step size is 1 / (2 lambda_max(A^H A)).
    """
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    y = np.asarray(y, dtype=complex).reshape(-1)
    if not np.isfinite(y).all() or not np.isfinite(alpha):
        raise ValueError("non-finite inputs")
    a_mat = fault_system_matrix(alpha, p, scenario, schedule)
    n = a_mat.shape[1]
    z = y - a_mat.sum(axis=1)  # y - A @ 1
    gram = a_mat.conj().T @ a_mat
    lam_max = float(np.linalg.eigvalsh(gram)[-1])
    if lam_max <= 0:
        return np.ones(n, dtype=complex)
    step = 1.0 / (2.0 * lam_max)
    atz = a_mat.conj().T @ z
    u = np.zeros(n, dtype=complex)
    obj_prev = float(np.vdot(z, z).real)
    for _ in range(max_iter):
        grad = 2.0 * (gram @ u - atz)
        u = _soft_threshold(u - step * grad, step * xi)
        r = z - a_mat @ u
        obj = float(np.vdot(r, r).real) + xi * float(np.abs(u).sum())
        if abs(obj_prev - obj) <= tol * max(obj_prev, 1e-300):
            break
        obj_prev = obj
    return 1.0 + u


def l1_jlfd(
    y: np.ndarray,
    schedule: PhaseSchedule,
    scenario: Scenario,
    grid: GridSpec,
    xi: float,
    max_iterations: int = 5,
    epsilon: float = 1e-3,
) -> Estimate:
    """Alternate l1 mask recovery and fixed-mask localization.

    Starts from the all-ones mask, stops when the position update moves by at
    most ``epsilon`` or after ``max_iterations`` rounds, then re-localizes
    once more with the final mask.
    """
    y = np.asarray(y, dtype=complex).reshape(-1)
    n = scenario.num_elements
    m_hat = np.ones(n, dtype=complex)
    loc = localize_fixed_mask(y, schedule, m_hat, grid, scenario)
    trace: List[Tuple[int, np.ndarray, np.ndarray, Optional[int]]] = [
        (0, loc.p_hat.copy(), m_hat.copy(), None)
    ]
    evals = loc.num_residual_evals
    i = 0
    while i < max_iterations:
        m_new = lasso_mask(y, loc.alpha_hat, loc.p_hat, schedule, scenario, xi)
        loc_new = localize_fixed_mask(y, schedule, m_new, grid, scenario)
        evals += loc_new.num_residual_evals
        moved = float(np.linalg.norm(loc_new.p_hat - loc.p_hat))
        m_hat, loc = m_new, loc_new
        i += 1
        trace.append((i, loc.p_hat.copy(), m_hat.copy(), None))
        if moved <= epsilon:
            break
    # final refinement of position and gain for the selected mask
    loc = localize_fixed_mask(y, schedule, m_hat, grid, scenario)
    evals += loc.num_residual_evals
    failing = np.flatnonzero(~np.isclose(m_hat, 1.0)).tolist()
    return Estimate(
        alpha_hat=loc.alpha_hat,
        p_hat=loc.p_hat,
        m_hat=m_hat,
        failing_set=failing,
        per_iteration_trace=trace,
        info={"iterations": i, "num_residual_evals": evals},
    )


# ---------------------------------------------------------------------------
# Successive hypothesis-testing estimator
# ---------------------------------------------------------------------------

@dataclass
class SuccessiveState:
    """Current committed state of the successive detector."""

    alpha: complex
    p: np.ndarray
    m_prev: np.ndarray
    detected: Tuple[int, ...]


def _hypothesis_mask(k: int, zeta_k: Optional[complex], state: SuccessiveState) -> np.ndarray:
    # hypothesis index k >= 1 refers to element k - 1
    m = np.ones(state.m_prev.size, dtype=complex)
    for n in state.detected:
        m[n] = state.m_prev[n]
    if k >= 1:
        m[k - 1] = zeta_k
    return m


def _committed_coeff_logpdf(state: SuccessiveState) -> float:
    """Sum of log-densities of the already-committed coefficients.

    This term is common to every hypothesis at a given state, so it cancels
    in the argmin; when an intermediate unconstrained fit left the unit disk
    (density zero) it is replaced by 0 to keep the comparison meaningful.
    """
    with np.errstate(divide="ignore"):
        total = sum(
            np.log(failure_coeff_pdf(state.m_prev[i], zero_mode="inf"))
            for i in state.detected
        )
    return float(total) if np.isfinite(total) else 0.0


def _log_prior(
    k: int, zeta_k: Optional[complex], state: SuccessiveState, p_fail: float
) -> float:
    """Log prior mass of the hypothesis mask under the spike-and-slab model."""
    n = state.m_prev.size
    n_det = len(state.detected)
    coeff_terms = _committed_coeff_logpdf(state)
    if k == 0:
        return (
            (n - n_det) * np.log(1.0 - p_fail) + n_det * np.log(p_fail) + coeff_terms
        )
    r = abs(zeta_k)
    if r == 0.0 or r > 1.0:
        return -np.inf
    return (
        (n - 1 - n_det) * np.log(1.0 - p_fail)
        + (n_det + 1) * np.log(p_fail)
        + coeff_terms
        + np.log(failure_coeff_pdf(zeta_k))
    )


def hypothesis_cost(
    k: int,
    zeta_k: Optional[complex],
    state: SuccessiveState,
    y: np.ndarray,
    schedule: PhaseSchedule,
    scenario: Scenario,
    p_fail: float,
) -> HypothesisCost:
    """Hybrid ML/MAP cost of hypothesis k at the current state.

    k = 0 keeps the committed mask; k >= 1 additionally marks element k - 1
    as failing with coefficient zeta_k.
    """
    if not 0.0 < p_fail < 1.0:
        raise ValueError("p_fail must lie in (0, 1)")
    if k >= 1 and (k - 1) in state.detected:
        raise ValueError("hypothesis index already detected")
    y = np.asarray(y, dtype=complex).reshape(-1)
    a_mat = fault_system_matrix(state.alpha, state.p, scenario, schedule)
    m = _hypothesis_mask(k, zeta_k, state) if k >= 1 else _committed_mask(state)
    logp = _log_prior(k, zeta_k, state, p_fail)
    if not np.isfinite(logp):
        return HypothesisCost(k, np.inf, zeta_k)
    r = y - a_mat @ m
    cost = float(np.vdot(r, r).real) / scenario.noise_psd - logp
    return HypothesisCost(k, cost, zeta_k if k >= 1 else None)


def _committed_mask(state: SuccessiveState) -> np.ndarray:
    m = np.ones(state.m_prev.size, dtype=complex)
    for n in state.detected:
        m[n] = state.m_prev[n]
    return m


def candidate_zeta(
    k: int,
    state: SuccessiveState,
    y: np.ndarray,
    schedule: PhaseSchedule,
    scenario: Scenario,
    penalized: bool = False,
) -> complex:
    """Closed-form failure coefficient for the "element k fails" hypothesis.

    The observation is residualized against every other column weighted by
    its current mask value; the coefficient is then a scalar least-squares
    fit against column k.  ``penalized=True`` additionally accounts for the
    log-magnitude prior term (the exact 1-D subproblem), falling back to the
    plain fit when that subproblem has no interior stationary point.
    """
    y = np.asarray(y, dtype=complex).reshape(-1)
    a_mat = fault_system_matrix(state.alpha, state.p, scenario, schedule)
    col = a_mat[:, k]
    col_sq = float(np.vdot(col, col).real)
    if col_sq == 0.0:
        raise ValueError(f"zero model column for element {k}")
    weights = _committed_mask(state)
    weights[k] = 0.0
    y_res = y - a_mat @ weights
    zeta_ls = complex(np.vdot(col, y_res) / col_sq)
    if not penalized:
        return zeta_ls
    # exact subproblem: minimize ||y_res - zeta col||^2 / N0 + log |zeta|.
    # With zeta = rho e^{j theta}, theta aligns with the LS phase and rho
    # solves 2 ||col||^2 rho^2 / N0 - 2 |col^H y_res| rho / N0 + 1 = 0.
    n0 = scenario.noise_psd
    cc = float(np.abs(np.vdot(col, y_res)))
    a2 = 2.0 * col_sq / n0
    disc = (2.0 * cc / n0) ** 2 - 4.0 * a2
    if disc < 0:
        return zeta_ls
    rho = (2.0 * cc / n0 + np.sqrt(disc)) / (2.0 * a2)
    phase = zeta_ls / abs(zeta_ls) if abs(zeta_ls) > 0 else 1.0
    return complex(rho * phase)


def joint_zeta_ls(
    indices: Sequence[int],
    alpha: complex,
    p: np.ndarray,
    y: np.ndarray,
    schedule: PhaseSchedule,
    scenario: Scenario,
) -> np.ndarray:
    """Joint unconstrained LS over the failure coefficients of ``indices``."""
    indices = list(indices)
    y = np.asarray(y, dtype=complex).reshape(-1)
    a_mat = fault_system_matrix(alpha, p, scenario, schedule)
    keep = np.ones(a_mat.shape[1], dtype=bool)
    keep[indices] = False
    y_res = y - a_mat[:, keep].sum(axis=1)
    sub = a_mat[:, indices]
    sol, _, rank, _ = np.linalg.lstsq(sub, y_res, rcond=None)
    if rank < len(indices):
        warnings.warn("rank-deficient failure-coefficient system", RuntimeWarning)
    return sol


def unit_disk_refine(
    indices: Sequence[int],
    alpha: complex,
    p: np.ndarray,
    y: np.ndarray,
    schedule: PhaseSchedule,
    scenario: Scenario,
    max_iter: int = 5000,
    tol: float = 1e-10,
) -> np.ndarray:
    """Constrained LS over failure coefficients with |zeta_n| <= 1.

    Projected gradient with step 1 / (2 lambda_max), started from the
    radially-clipped unconstrained solution; the projection clips each
    coordinate to the closed unit disk.
    """
    indices = list(indices)
    if not indices:
        return np.zeros(0, dtype=complex)
    y = np.asarray(y, dtype=complex).reshape(-1)
    a_mat = fault_system_matrix(alpha, p, scenario, schedule)
    keep = np.ones(a_mat.shape[1], dtype=bool)
    keep[indices] = False
    y_res = y - a_mat[:, keep].sum(axis=1)
    sub = a_mat[:, indices]
    gram = sub.conj().T @ sub
    aty = sub.conj().T @ y_res
    lam_max = float(np.linalg.eigvalsh(gram)[-1])
    if lam_max <= 0:
        return np.zeros(len(indices), dtype=complex)
    step = 1.0 / (2.0 * lam_max)

    def project(z):
        mag = np.abs(z)
        return np.where(mag > 1.0, z / np.where(mag > 0, mag, 1.0), z)

    zeta, _, _, _ = np.linalg.lstsq(sub, y_res, rcond=None)
    zeta = project(zeta)
    r = y_res - sub @ zeta
    obj = float(np.vdot(r, r).real)
    for _ in range(max_iter):
        grad = 2.0 * (gram @ zeta - aty)
        zeta_new = project(zeta - step * grad)
        r = y_res - sub @ zeta_new
        obj_new = float(np.vdot(r, r).real)
        if obj_new > obj + 1e-12 * max(obj, 1.0):
            break  # numerically stalled; keep the previous iterate
        zeta = zeta_new
        if abs(obj - obj_new) <= tol * max(obj, 1e-300):
            obj = obj_new
            break
        obj = obj_new
    return zeta


def _evaluate_all_hypotheses(
    state: SuccessiveState,
    y: np.ndarray,
    schedule: PhaseSchedule,
    scenario: Scenario,
    p_fail: float,
    penalized_zeta: bool = False,
) -> Tuple[int, Dict[int, complex], Dict[int, float]]:
    """Vectorized cost evaluation over all admissible hypotheses.

    Returns the argmin hypothesis (lowest index on exact ties), the
    candidate coefficients and the full cost table.
    """
    y = np.asarray(y, dtype=complex).reshape(-1)
    a_mat = fault_system_matrix(state.alpha, state.p, scenario, schedule)
    n = a_mat.shape[1]
    m_base = _committed_mask(state)
    r0 = y - a_mat @ m_base
    col_sq = np.einsum("tn,tn->n", a_mat.conj(), a_mat).real
    admissible = np.array(
        [k for k in range(n) if k not in state.detected], dtype=int
    )
    n0 = scenario.noise_psd
    n_det = len(state.detected)
    coeff_terms = _committed_coeff_logpdf(state)
    log_prior0 = (n - n_det) * np.log(1.0 - p_fail) + n_det * np.log(p_fail) + coeff_terms
    cost0 = float(np.vdot(r0, r0).real) / n0 - log_prior0

    costs = {0: cost0}
    zetas: Dict[int, complex] = {}
    best_k, best_cost = 0, cost0
    if admissible.size:
        cols = a_mat[:, admissible]
        # residualized target per k is r0 + m_base_k * col_k (all admissible
        # base weights are 1)
        cross = np.einsum("tk,t->k", cols.conj(), r0)
        sq = col_sq[admissible]
        valid = sq > 0
        zeta_hat = np.where(valid, cross / np.where(valid, sq, 1.0) + 1.0, 0.0)
        if penalized_zeta:
            zeta_hat = np.array(
                [
                    candidate_zeta(int(k), state, y, schedule, scenario, penalized=True)
                    for k in admissible
                ]
            )
        # residual with entry k replaced: r0 + (1 - zeta_k) col_k
        delta = (1.0 - zeta_hat)[None, :] * cols
        res = r0[:, None] + delta
        res_sq = np.einsum("tk,tk->k", res.conj(), res).real
        mag = np.abs(zeta_hat)
        log_prior_k = np.where(
            (mag > 0) & (mag <= 1.0) & valid,
            (n - 1 - n_det) * np.log(1.0 - p_fail)
            + (n_det + 1) * np.log(p_fail)
            + coeff_terms
            - np.log(2.0 * np.pi * np.where(mag > 0, mag, 1.0)),
            -np.inf,
        )
        cost_k = res_sq / n0 - log_prior_k
        for j, k in enumerate(admissible):
            zetas[int(k)] = complex(zeta_hat[j])
            costs[int(k) + 1] = float(cost_k[j])
        j_best = int(np.argmin(cost_k))
        if cost_k[j_best] < best_cost:
            best_k, best_cost = int(admissible[j_best]) + 1, float(cost_k[j_best])
    return best_k, zetas, costs


def successive_jlfd(
    y: np.ndarray,
    schedule: PhaseSchedule,
    scenario: Scenario,
    grid: GridSpec,
    p_fail: float,
    alternation_cap: int = 5,
    max_detections: Optional[int] = None,
    epsilon: float = 1e-3,
    penalized_zeta: bool = False,
) -> Estimate:
    """Detect failing elements one-by-one via multiple hypothesis testing.

    Each outer iteration selects the most likely single additional failure
    (or "no new failure", which terminates), re-fits all detected
    coefficients jointly, and re-localizes; the committed failure count is
    capped at ceil(2 N p_fail) unless ``max_detections`` is given.  A final
    unit-disk-constrained coefficient refinement and re-localization close
    the run.
    """
    if not 0.0 < p_fail < 1.0:
        raise ValueError("p_fail must lie in (0, 1)")
    y = np.asarray(y, dtype=complex).reshape(-1)
    n = scenario.num_elements
    if max_detections is None:
        max_detections = int(np.ceil(2.0 * n * p_fail))

    loc = localize_fixed_mask(y, schedule, np.ones(n, dtype=complex), grid, scenario)
    evals = loc.num_residual_evals
    state = SuccessiveState(
        alpha=loc.alpha_hat, p=loc.p_hat, m_prev=np.ones(n, dtype=complex), detected=()
    )
    trace: List[Tuple[int, np.ndarray, np.ndarray, Optional[int]]] = [
        (0, state.p.copy(), _committed_mask(state), None)
    ]
    terminated = False
    outer = 0
    while outer < max_detections and not terminated:
        outer += 1
        ell = 0
        committed = False
        while ell < alternation_cap:
            khat, zetas, _ = _evaluate_all_hypotheses(
                state, y, schedule, scenario, p_fail, penalized_zeta
            )
            ell += 1
            if khat == 0:
                terminated = True
                trace.append((outer, state.p.copy(), _committed_mask(state), 0))
                break
            k_idx = khat - 1
            new_detected = state.detected + (k_idx,)
            zeta_joint = joint_zeta_ls(
                new_detected, state.alpha, state.p, y, schedule, scenario
            )
            m_tent = np.ones(n, dtype=complex)
            m_tent[list(new_detected)] = zeta_joint
            loc = localize_fixed_mask(y, schedule, m_tent, grid, scenario)
            evals += loc.num_residual_evals
            moved = float(np.linalg.norm(loc.p_hat - state.p))
            state = SuccessiveState(
                alpha=loc.alpha_hat, p=loc.p_hat, m_prev=state.m_prev, detected=state.detected
            )
            if ell >= alternation_cap or moved <= epsilon:
                state = SuccessiveState(
                    alpha=loc.alpha_hat, p=loc.p_hat, m_prev=m_tent, detected=new_detected
                )
                trace.append((outer, state.p.copy(), _committed_mask(state), khat))
                committed = True
                break
        if not committed and not terminated:
            break

    # refinement: constrained coefficients, then one last localization
    detected = sorted(state.detected)
    m_hat = np.ones(n, dtype=complex)
    if detected:
        zeta_ref = unit_disk_refine(
            detected, state.alpha, state.p, y, schedule, scenario
        )
        m_hat[detected] = zeta_ref
    loc = localize_fixed_mask(y, schedule, m_hat, grid, scenario)
    evals += loc.num_residual_evals
    return Estimate(
        alpha_hat=loc.alpha_hat,
        p_hat=loc.p_hat,
        m_hat=m_hat,
        failing_set=detected,
        per_iteration_trace=trace,
        info={
            "iterations": outer,
            "terminated_no_failure": terminated,
            "num_residual_evals": evals,
        },
    )
