"""Fisher information, standard CRBs, and the model-mismatch bound pipeline.

The real parameter vector is eta = [Re(alpha), Im(alpha), p^T] (length 5).
When the receiver assumes a failure-free RIS while the data follow the
failure-bearing model, the relevant limits are the misspecified CRB sandwich
MCRB = A^{-1} B A^{-1} evaluated at the pseudo-true parameter, and the total
bound LB = MCRB + bias outer product.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from .estimators import GridSpec, localize_fixed_mask
from .scene import (
    FailureMask,
    PhaseSchedule,
    Scenario,
    combined_response_derivatives,
    fault_system_matrix,
    model_mean,
)

POSITION_SLICE = slice(2, 5)
STATIONARITY_TOL = 1e-7
FIM_CONDITION_CAP = 1e14


class SingularFimError(np.linalg.LinAlgError):
    """Fisher information matrix is singular or pathologically conditioned."""


@dataclass(frozen=True)
class ParamVector:
    """Real parameterization [Re(alpha), Im(alpha), p]."""

    alpha_re: float
    alpha_im: float
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(3))

    @property
    def alpha(self) -> complex:
        return complex(self.alpha_re, self.alpha_im)

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.alpha_re, self.alpha_im], self.p))

    @classmethod
    def from_array(cls, x: np.ndarray) -> "ParamVector":
        x = np.asarray(x, dtype=float).reshape(5)
        return cls(float(x[0]), float(x[1]), x[2:5])

    @classmethod
    def from_alpha_position(cls, alpha: complex, p) -> "ParamVector":
        return cls(float(np.real(alpha)), float(np.imag(alpha)), p)


@dataclass(frozen=True)
class ExtendedParamVector:
    """ParamVector extended with (kappa, theta) per known failing element."""

    base: ParamVector
    indices: Tuple[int, ...]
    kappa: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        kappa = np.asarray(self.kappa, dtype=float).reshape(-1)
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        if not (len(self.indices) == kappa.size == theta.size):
            raise ValueError("indices, kappa and theta must have equal length")
        if ((kappa <= 0) | (kappa > 1)).any():
            raise ValueError("kappa must lie in (0, 1]")
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "theta", theta)

    @property
    def dimension(self) -> int:
        return 5 + 2 * len(self.indices)

    def mask_vector(self, num_elements: int) -> np.ndarray:
        m = np.ones(num_elements, dtype=complex)
        for i, idx in enumerate(self.indices):
            m[idx] = self.kappa[i] * np.exp(1j * self.theta[i])
        return m

    @classmethod
    def from_mask(cls, base: ParamVector, mask: FailureMask) -> "ExtendedParamVector":
        idx = mask.failing_indices
        zeta = mask.zeta[idx]
        return cls(base, tuple(int(i) for i in idx), np.abs(zeta), np.angle(zeta))


@dataclass
class BoundReport:
    """Computed theoretical limits for one (scenario, mask) instance."""

    crb_perfect_pos: float
    crb_knownloc_pos: float
    mcrb_matrix: np.ndarray
    pseudo_true: ParamVector
    lb_matrix: np.ndarray
    lb_pos: float


# ---------------------------------------------------------------------------
# Model mean derivatives
# ---------------------------------------------------------------------------

def mean_and_jacobian(
    eta: ParamVector,
    scenario: Scenario,
    schedule: PhaseSchedule,
    m: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Noiseless mean and its (T, 5) complex Jacobian at eta.

    ``m`` is the mask baked into the model (all-ones for the failure-free
    assumed model).
    """
    if m is None:
        m = np.ones(scenario.num_elements, dtype=complex)
    b, db, _ = combined_response_derivatives(eta.p, scenario)
    wm = scenario.pilots[:, None] * schedule.phi.T * np.asarray(m)[None, :]
    h = wm @ b
    dh = wm @ db  # (T, 3)
    mu = eta.alpha * h
    jac = np.empty((scenario.num_transmissions, 5), dtype=complex)
    jac[:, 0] = h
    jac[:, 1] = 1j * h
    jac[:, 2:5] = eta.alpha * dh
    return mu, jac


def mean_second_derivatives(
    eta: ParamVector,
    scenario: Scenario,
    schedule: PhaseSchedule,
    m: Optional[np.ndarray] = None,
) -> np.ndarray:
    """(T, 5, 5) second-derivative tensor of the model mean at eta."""
    if m is None:
        m = np.ones(scenario.num_elements, dtype=complex)
    _, db, d2b = combined_response_derivatives(eta.p, scenario)
    wm = scenario.pilots[:, None] * schedule.phi.T * np.asarray(m)[None, :]
    dh = wm @ db  # (T, 3)
    d2h = np.einsum("tn,nkl->tkl", wm, d2b)  # (T, 3, 3)
    t = scenario.num_transmissions
    hess = np.zeros((t, 5, 5), dtype=complex)
    hess[:, 0, 2:5] = dh
    hess[:, 2:5, 0] = dh
    hess[:, 1, 2:5] = 1j * dh
    hess[:, 2:5, 1] = 1j * dh
    hess[:, 2:5, 2:5] = eta.alpha * d2h
    return hess


# ---------------------------------------------------------------------------
# Standard Fisher information / CRB
# ---------------------------------------------------------------------------

def _check_fim(fim: np.ndarray) -> None:
    cond = np.linalg.cond(fim)
    if not np.isfinite(cond) or cond > FIM_CONDITION_CAP:
        warnings.warn(
            f"ill-conditioned FIM (cond={cond:.3e}); geometry may be unidentifiable",
            RuntimeWarning,
        )


def fim_perfect(
    eta: ParamVector,
    mask: FailureMask,
    scenario: Scenario,
    schedule: PhaseSchedule,
) -> np.ndarray:
    """5x5 FIM when the failure mask is perfectly known."""
    _, jac = mean_and_jacobian(eta, scenario, schedule, m=mask.m)
    fim = (2.0 / scenario.noise_psd) * np.real(jac.conj().T @ jac)
    _check_fim(fim)
    return fim


def crb_perfect(
    eta: ParamVector,
    mask: FailureMask,
    scenario: Scenario,
    schedule: PhaseSchedule,
) -> float:
    """Position CRB (m^2) under perfect mask knowledge."""
    fim = fim_perfect(eta, mask, scenario, schedule)
    inv = _invert_fim(fim)
    return float(np.trace(inv[POSITION_SLICE, POSITION_SLICE]))


def _invert_fim(fim: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.inv(fim)
    except np.linalg.LinAlgError as exc:
        raise SingularFimError(str(exc)) from exc


def fim_knownloc(
    eta2: ExtendedParamVector, scenario: Scenario, schedule: PhaseSchedule
) -> np.ndarray:
    """Extended FIM with failure locations known, coefficients unknown."""
    base = eta2.base
    m = eta2.mask_vector(scenario.num_elements)
    _, jac5 = mean_and_jacobian(base, scenario, schedule, m=m)
    a_mat = fault_system_matrix(base.alpha, base.p, scenario, schedule)
    cols = []
    for i, idx in enumerate(eta2.indices):
        phase = np.exp(1j * eta2.theta[i])
        cols.append(a_mat[:, idx] * phase)  # d mu / d kappa
    for i, idx in enumerate(eta2.indices):
        phase = np.exp(1j * eta2.theta[i])
        cols.append(a_mat[:, idx] * (1j * eta2.kappa[i] * phase))  # d mu / d theta
    jac = np.concatenate([jac5] + [c[:, None] for c in cols], axis=1) if cols else jac5
    fim = (2.0 / scenario.noise_psd) * np.real(jac.conj().T @ jac)
    _check_fim(fim)
    return fim


def crb_knownloc(
    eta2: ExtendedParamVector, scenario: Scenario, schedule: PhaseSchedule
) -> float:
    """Position CRB (m^2) with known failure locations, unknown coefficients."""
    fim = fim_knownloc(eta2, scenario, schedule)
    inv = _invert_fim(fim)
    return float(np.trace(inv[POSITION_SLICE, POSITION_SLICE]))


# ---------------------------------------------------------------------------
# Pseudo-true parameter and mismatch bounds
# ---------------------------------------------------------------------------

def pseudo_true(
    true_eta: ParamVector,
    mask: FailureMask,
    scenario: Scenario,
    schedule: PhaseSchedule,
    grid: GridSpec,
) -> ParamVector:
    """Assumed-model parameter minimizing ||mu - mu_tilde(eta)||^2.

    For equal-covariance Gaussian models the KL minimizer is the
    mean-matching least-squares fit; it is located with the fixed-mask grid
    localizer on the noiseless true mean and polished by a damped
    least-squares refinement.
    """
    mu = model_mean(true_eta.alpha, true_eta.p, scenario, schedule, mask.m)
    loc = localize_fixed_mask(
        mu, schedule, np.ones(scenario.num_elements, dtype=complex), grid, scenario
    )
    if loc.tie:
        warnings.warn("pseudo-true grid fit is non-unique (tied cells)", RuntimeWarning)
    x0 = ParamVector.from_alpha_position(loc.alpha_hat, loc.p_hat).as_array()

    def resid(x):
        eta = ParamVector.from_array(x)
        mu_t, _ = mean_and_jacobian(eta, scenario, schedule)
        r = mu - mu_t
        return np.concatenate([r.real, r.imag])

    def jac(x):
        eta = ParamVector.from_array(x)
        _, d = mean_and_jacobian(eta, scenario, schedule)
        return np.concatenate([-d.real, -d.imag])

    # confine the position to the search region: the mean-fit objective
    # flattens in the far field and an unbounded polish can wander off to a
    # spurious plane-wave stationary point
    r_max = 2.0 * grid.distance_range[1]
    lower = np.array([-np.inf, -np.inf, -r_max, -r_max, -r_max])
    upper = np.array([np.inf, np.inf, r_max, r_max, r_max])
    x0 = np.clip(x0, lower + 1e-12, upper - 1e-12)
    sol = least_squares(
        resid,
        x0,
        jac=jac,
        method="trf",
        bounds=(lower, upper),
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
    )
    eta0 = ParamVector.from_array(sol.x)
    mu0, d0 = mean_and_jacobian(eta0, scenario, schedule)
    # gradient of 0.5 ||mu - mu_tilde||^2 in the real parameterization
    grad = np.real(d0.conj().T @ (mu - mu0))
    scale = max(float(np.linalg.norm(mu)), 1e-300)
    if np.linalg.norm(grad) > STATIONARITY_TOL * scale * max(np.linalg.norm(d0), 1.0):
        warnings.warn(
            "pseudo-true refinement did not reach the stationarity tolerance",
            RuntimeWarning,
        )
    return eta0


def mcrb_matrices(
    pseudo: ParamVector,
    true_eta: ParamVector,
    mask: FailureMask,
    scenario: Scenario,
    schedule: PhaseSchedule,
) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form curvature (A) and score-covariance (B) matrices at eta0."""
    n0 = scenario.noise_psd
    mu = model_mean(true_eta.alpha, true_eta.p, scenario, schedule, mask.m)
    mu0, d = mean_and_jacobian(pseudo, scenario, schedule)
    hess = mean_second_derivatives(pseudo, scenario, schedule)
    r = mu - mu0
    grad = np.real(d.conj().T @ r)
    if np.linalg.norm(grad) > STATIONARITY_TOL * max(np.linalg.norm(mu), 1e-300) * max(
        np.linalg.norm(d), 1.0
    ):
        warnings.warn(
            "curvature matrices evaluated away from the mean-fit stationary point",
            RuntimeWarning,
        )
    dhd = d.conj().T @ d
    r_dot_hess = np.einsum("t,tij->ij", r.conj(), hess)
    a_mat = (2.0 / n0) * np.real(r_dot_hess - dhd)
    a_mat = 0.5 * (a_mat + a_mat.T)
    b_mat = (2.0 / n0) * np.real(dhd) + (4.0 / n0**2) * np.outer(grad, grad)
    b_mat = 0.5 * (b_mat + b_mat.T)
    return a_mat, b_mat


def mcrb(a_mat: np.ndarray, b_mat: np.ndarray) -> np.ndarray:
    """Sandwich bound A^{-1} B A^{-1}."""
    a_inv = _invert_fim(a_mat)
    out = a_inv @ b_mat @ a_inv
    return 0.5 * (out + out.T)


def lower_bound(
    mcrb_matrix: np.ndarray, pseudo: ParamVector, true_eta: ParamVector
) -> Tuple[np.ndarray, float]:
    """MCRB plus the bias outer product, and its position-block trace (m^2)."""
    bias = true_eta.as_array() - pseudo.as_array()
    lb = mcrb_matrix + np.outer(bias, bias)
    lb_pos = float(np.trace(lb[POSITION_SLICE, POSITION_SLICE]))
    return lb, lb_pos


def bound_report(
    mask: FailureMask,
    scenario: Scenario,
    schedule: PhaseSchedule,
    grid: GridSpec,
) -> BoundReport:
    """All bounds for the scenario's true parameters and the given mask."""
    true_eta = ParamVector.from_alpha_position(
        scenario.channel_gain_true, scenario.ue_true_position
    )
    crb_p = crb_perfect(true_eta, mask, scenario, schedule)
    eta2 = ExtendedParamVector.from_mask(true_eta, mask)
    crb_k = crb_knownloc(eta2, scenario, schedule)
    eta0 = pseudo_true(true_eta, mask, scenario, schedule, grid)
    a_mat, b_mat = mcrb_matrices(eta0, true_eta, mask, scenario, schedule)
    mcrb_mat = mcrb(a_mat, b_mat)
    lb_mat, lb_pos = lower_bound(mcrb_mat, eta0, true_eta)
    return BoundReport(
        crb_perfect_pos=crb_p,
        crb_knownloc_pos=crb_k,
        mcrb_matrix=mcrb_mat,
        pseudo_true=eta0,
        lb_matrix=lb_mat,
        lb_pos=lb_pos,
    )
