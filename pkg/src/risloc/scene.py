"""Scene model: geometry, steering vectors, failure masks and signal synthesis.

Conventions:
  - The RIS is a planar array of N passive elements; element n sits at
    ``element_positions[n]`` (meters).  The RIS center is the phase
    reference of the near-field steering vector.
  - Observations are T scalar baseband samples, one per transmission.
  - Complex Gaussian noise has total variance ``noise_psd`` per complex
    sample (``noise_psd / 2`` per real dimension).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

# Distances below this are treated as coincident points (degenerate geometry).
GEOMETRY_EPS = 1e-9


class DegenerateGeometryError(ValueError):
    """A field point coincides with an RIS element or the RIS center."""


class SingularDensityError(ValueError):
    """The failure-coefficient density was evaluated at its singularity."""


def _as_point(p) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(3)
    return p


@dataclass(frozen=True)
class Scenario:
    """Full geometry and radio parameters of one localization scene.

    ``pilots`` defaults to the constant pilot sqrt(pilot_energy) on every
    transmission; arbitrary pilot vectors remain supported.
    """

    p_bs: np.ndarray
    p_ris: np.ndarray
    element_positions: np.ndarray
    wavelength: float
    num_transmissions: int
    pilot_energy: float
    noise_psd: float
    ue_true_position: np.ndarray
    channel_gain_true: complex
    pilots: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "p_bs", _as_point(self.p_bs))
        object.__setattr__(self, "p_ris", _as_point(self.p_ris))
        elems = np.asarray(self.element_positions, dtype=float)
        if elems.ndim != 2 or elems.shape[1] != 3 or elems.shape[0] < 1:
            raise ValueError("element_positions must be an (N, 3) array with N >= 1")
        object.__setattr__(self, "element_positions", elems)
        object.__setattr__(
            self, "ue_true_position", _as_point(self.ue_true_position)
        )
        object.__setattr__(self, "channel_gain_true", complex(self.channel_gain_true))
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.noise_psd <= 0:
            raise ValueError("noise_psd must be positive")
        if self.pilot_energy <= 0:
            raise ValueError("pilot_energy must be positive")
        if self.num_transmissions < 1:
            raise ValueError("num_transmissions must be >= 1")
        if self.pilots is None:
            s = np.full(self.num_transmissions, np.sqrt(self.pilot_energy))
        else:
            s = np.asarray(self.pilots, dtype=complex).reshape(self.num_transmissions)
        object.__setattr__(self, "pilots", s)

    @property
    def num_elements(self) -> int:
        return self.element_positions.shape[0]

    @property
    def snr(self) -> float:
        """SNR = |alpha|^2 * Es / N0."""
        return (
            abs(self.channel_gain_true) ** 2 * self.pilot_energy / self.noise_psd
        )

    def with_noise_psd(self, n0: float) -> "Scenario":
        return Scenario(
            p_bs=self.p_bs,
            p_ris=self.p_ris,
            element_positions=self.element_positions,
            wavelength=self.wavelength,
            num_transmissions=self.num_transmissions,
            pilot_energy=self.pilot_energy,
            noise_psd=n0,
            ue_true_position=self.ue_true_position,
            channel_gain_true=self.channel_gain_true,
            pilots=self.pilots,
        )

    def with_ue_position(self, p) -> "Scenario":
        return Scenario(
            p_bs=self.p_bs,
            p_ris=self.p_ris,
            element_positions=self.element_positions,
            wavelength=self.wavelength,
            num_transmissions=self.num_transmissions,
            pilot_energy=self.pilot_energy,
            noise_psd=self.noise_psd,
            ue_true_position=p,
            channel_gain_true=self.channel_gain_true,
            pilots=self.pilots,
        )

    def geometry_key(self) -> bytes:
        """Hashable key identifying everything the grid search geometry depends on."""
        return b"".join(
            [
                self.p_bs.tobytes(),
                self.p_ris.tobytes(),
                self.element_positions.tobytes(),
                np.float64(self.wavelength).tobytes(),
            ]
        )


def grid_element_positions(
    rows: int, cols: int, spacing: float, center=(0.0, 0.0, 0.0)
) -> np.ndarray:
    """Row-major planar element grid in the X-Y plane, centered on ``center``.

    Element index n = r * cols + c maps to offset
    ((c - (cols-1)/2) * spacing, (r - (rows-1)/2) * spacing, 0).
    """
    center = _as_point(center)
    r_idx, c_idx = np.divmod(np.arange(rows * cols), cols)
    x = (c_idx - (cols - 1) / 2.0) * spacing
    y = (r_idx - (rows - 1) / 2.0) * spacing
    pos = np.stack([x, y, np.zeros_like(x)], axis=1)
    return pos + center


@dataclass(frozen=True)
class PhaseSchedule:
    """Designer-controlled RIS weights, one unit-modulus column per transmission."""

    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=complex)
        if phi.ndim != 2:
            raise ValueError("phi must be an (N, T) matrix")
        if not np.allclose(np.abs(phi), 1.0, atol=1e-9):
            raise ValueError("phase schedule entries must have unit modulus")
        object.__setattr__(self, "phi", phi)

    @property
    def num_elements(self) -> int:
        return self.phi.shape[0]

    @property
    def num_transmissions(self) -> int:
        return self.phi.shape[1]


def random_phase_schedule(
    num_elements: int, num_transmissions: int, rng: np.random.Generator
) -> PhaseSchedule:
    """Uniform i.i.d. phases on [-pi, pi)."""
    theta = rng.uniform(-np.pi, np.pi, size=(num_elements, num_transmissions))
    return PhaseSchedule(np.exp(1j * theta))


@dataclass(frozen=True)
class FailureMask:
    """Binary failure indicators c, complex coefficients zeta and mask m.

    m_n = c_n * zeta_n + 1 - c_n, so functioning elements have m_n = 1 exactly
    and failing elements carry a coefficient inside the closed unit disk.
    """

    c: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=int)
        zeta = np.asarray(self.zeta, dtype=complex)
        if c.shape != zeta.shape or c.ndim != 1:
            raise ValueError("c and zeta must be 1-D arrays of equal length")
        if not np.isin(c, (0, 1)).all():
            raise ValueError("c must be binary")
        bad = (c == 1) & ((np.abs(zeta) > 1 + 1e-12) | (np.abs(zeta) == 0))
        if bad.any():
            raise ValueError("failing elements need 0 < |zeta| <= 1")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "zeta", zeta)

    @property
    def m(self) -> np.ndarray:
        # c * zeta + 1 - c, evaluated branch-wise so both cases are exact
        return np.where(self.c == 1, self.zeta, 1.0 + 0.0j)

    @property
    def failing_indices(self) -> np.ndarray:
        return np.flatnonzero(self.c == 1)

    @classmethod
    def all_ones(cls, num_elements: int) -> "FailureMask":
        return cls(np.zeros(num_elements, dtype=int), np.ones(num_elements, dtype=complex))

    @classmethod
    def from_indices(cls, num_elements: int, indices, zeta_values) -> "FailureMask":
        c = np.zeros(num_elements, dtype=int)
        zeta = np.ones(num_elements, dtype=complex)
        indices = np.asarray(indices, dtype=int)
        c[indices] = 1
        zeta[indices] = np.asarray(zeta_values, dtype=complex)
        return cls(c, zeta)


@dataclass(frozen=True)
class Observation:
    """T scalar baseband samples plus references to the generating setup."""

    y: np.ndarray
    scenario_id: Optional[str] = None
    phase_schedule_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=complex).reshape(-1))


@dataclass(frozen=True)
class RicianChannelRealization:
    """One draw of the Rician RIS-UE channel.

    ``exact_los=True`` bypasses the K-weighting and uses the pure LoS channel;
    this avoids catastrophic cancellation when modelling the K -> inf limit.
    """

    alpha_br: complex
    alpha_ru: complex
    k_factor: float
    h_nlos: np.ndarray
    exact_los: bool = False

    def __post_init__(self):
        if self.k_factor < 0:
            raise ValueError("k_factor must be nonnegative")
        object.__setattr__(self, "h_nlos", np.asarray(self.h_nlos, dtype=complex).reshape(-1))


def sample_rician_realization(
    alpha_br: complex,
    alpha_ru: complex,
    k_factor: float,
    num_elements: int,
    rng: np.random.Generator,
    exact_los: bool = False,
) -> RicianChannelRealization:
    h = (
        rng.standard_normal(num_elements) + 1j * rng.standard_normal(num_elements)
    ) / np.sqrt(2.0)
    return RicianChannelRealization(alpha_br, alpha_ru, k_factor, h, exact_los)


# ---------------------------------------------------------------------------
# Steering vectors and derivatives
# ---------------------------------------------------------------------------

def _distances(p: np.ndarray, scenario: Scenario) -> Tuple[np.ndarray, float]:
    p = _as_point(p)
    d_n = np.linalg.norm(p - scenario.element_positions, axis=1)
    d_c = float(np.linalg.norm(p - scenario.p_ris))
    if d_c < GEOMETRY_EPS or (d_n < GEOMETRY_EPS).any():
        raise DegenerateGeometryError(
            "field point coincides with an RIS element or the RIS center"
        )
    return d_n, d_c


def steering_vector(p, scenario: Scenario) -> np.ndarray:
    """Near-field steering vector referenced to the RIS center.

    Entry n is exp(-j (2 pi / lambda) (||p - p_n|| - ||p - p_ris||)).
    """
    d_n, d_c = _distances(_as_point(p), scenario)
    return np.exp(-2j * np.pi / scenario.wavelength * (d_n - d_c))


def steering_jacobian(p, scenario: Scenario) -> np.ndarray:
    """(N, 3) derivative of the steering vector with respect to position."""
    p = _as_point(p)
    d_n, d_c = _distances(p, scenario)
    a = np.exp(-2j * np.pi / scenario.wavelength * (d_n - d_c))
    u_n = (p - scenario.element_positions) / d_n[:, None]
    u_c = (p - scenario.p_ris) / d_c
    return a[:, None] * (-2j * np.pi / scenario.wavelength) * (u_n - u_c)


def steering_hessian(p, scenario: Scenario) -> np.ndarray:
    """(N, 3, 3) second derivative of the steering vector.

    With phase g_n(p) = (2 pi / lambda)(||p - p_n|| - ||p - p_ris||) and
    a_n = exp(-j g_n), the Hessian is a_n (-grad g grad g^T - j Hess g).
    """
    p = _as_point(p)
    d_n, d_c = _distances(p, scenario)
    k = 2.0 * np.pi / scenario.wavelength
    a = np.exp(-1j * k * (d_n - d_c))
    u_n = (p - scenario.element_positions) / d_n[:, None]
    u_c = (p - scenario.p_ris) / d_c
    grad = k * (u_n - u_c)  # (N, 3)
    eye = np.eye(3)
    hess_dn = (eye[None, :, :] - u_n[:, :, None] * u_n[:, None, :]) / d_n[:, None, None]
    hess_dc = (eye - np.outer(u_c, u_c)) / d_c
    hess_g = k * (hess_dn - hess_dc[None, :, :])
    outer = grad[:, :, None] * grad[:, None, :]
    return a[:, None, None] * (-outer - 1j * hess_g)


def combined_response(p, scenario: Scenario) -> np.ndarray:
    """Elementwise product of the UE-side and BS-side steering vectors."""
    return steering_vector(p, scenario) * steering_vector(scenario.p_bs, scenario)


def combined_response_derivatives(
    p, scenario: Scenario
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Combined response with its first and second position derivatives.

    Returns (b, db, d2b) with shapes (N,), (N, 3), (N, 3, 3).  Only the
    UE-side factor depends on p, so every derivative is scaled by the
    (constant) BS-side steering vector.
    """
    a_bs = steering_vector(scenario.p_bs, scenario)
    b = steering_vector(p, scenario) * a_bs
    db = steering_jacobian(p, scenario) * a_bs[:, None]
    d2b = steering_hessian(p, scenario) * a_bs[:, None, None]
    return b, db, d2b


# ---------------------------------------------------------------------------
# Failure statistics
# ---------------------------------------------------------------------------

def sample_failure_mask(
    p_fail: float, rng: np.random.Generator, num_elements: int
) -> FailureMask:
    """Independent Bernoulli(p_fail) failures with uniform-disk-phase coefficients.

    Where an element fails, zeta = kappa e^{j psi} with kappa ~ U(0, 1]
    (a draw of exactly zero is redrawn) and psi ~ U(-pi, pi).
    """
    if not 0.0 <= p_fail <= 1.0:
        raise ValueError("p_fail must lie in [0, 1]")
    c = (rng.random(num_elements) < p_fail).astype(int)
    # U(0, 1] via 1 - U[0, 1); a kappa of exactly 0 cannot occur.
    kappa = 1.0 - rng.random(num_elements)
    psi = rng.uniform(-np.pi, np.pi, size=num_elements)
    zeta = np.where(c == 1, kappa * np.exp(1j * psi), 1.0 + 0j)
    return FailureMask(c, zeta)


def sample_fixed_count_mask(
    num_failures: int, rng: np.random.Generator, num_elements: int
) -> FailureMask:
    """Exactly ``num_failures`` failing elements at uniformly random locations."""
    if not 0 <= num_failures <= num_elements:
        raise ValueError("num_failures must lie in [0, N]")
    idx = rng.choice(num_elements, size=num_failures, replace=False)
    kappa = 1.0 - rng.random(num_failures)
    psi = rng.uniform(-np.pi, np.pi, size=num_failures)
    return FailureMask.from_indices(num_elements, idx, kappa * np.exp(1j * psi))


def failure_coeff_pdf(zeta: complex, zero_mode: str = "error") -> float:
    """Density 1 / (2 pi |zeta|) on the punctured closed unit disk, 0 outside.

    The density is improper at zeta = 0; ``zero_mode`` selects whether that
    input raises (default) or returns +inf.
    """
    r = abs(zeta)
    if r == 0.0:
        if zero_mode == "inf":
            return np.inf
        raise SingularDensityError("failure coefficient density is singular at 0")
    if r > 1.0:
        return 0.0
    return 1.0 / (2.0 * np.pi * r)


# ---------------------------------------------------------------------------
# Forward synthesis
# ---------------------------------------------------------------------------

def fault_system_matrix(
    alpha: complex, p, scenario: Scenario, schedule: PhaseSchedule
) -> np.ndarray:
    """(T, N) matrix A with entry (t, n) = alpha * s_t * phi[n, t] * b_n(p).

    The noiseless observation mean under mask m is A @ m.
    """
    b = combined_response(p, scenario)
    return alpha * scenario.pilots[:, None] * schedule.phi.T * b[None, :]


def model_mean(
    alpha: complex, p, scenario: Scenario, schedule: PhaseSchedule, m: np.ndarray
) -> np.ndarray:
    """Noiseless observation mean for channel gain alpha, position p and mask m."""
    return fault_system_matrix(alpha, p, scenario, schedule) @ np.asarray(m, dtype=complex)


def sample_noise(
    scenario: Scenario, rng: np.random.Generator, size: Optional[int] = None
) -> np.ndarray:
    n = size if size is not None else scenario.num_transmissions
    scale = np.sqrt(scenario.noise_psd / 2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def synthesize(
    scenario: Scenario,
    schedule: PhaseSchedule,
    mask: FailureMask,
    rng: Optional[np.random.Generator] = None,
    noiseless: bool = False,
) -> Observation:
    """Draw one observation from the true (failure-bearing) model."""
    mean = model_mean(
        scenario.channel_gain_true,
        scenario.ue_true_position,
        scenario,
        schedule,
        mask.m,
    )
    if noiseless:
        return Observation(mean)
    if rng is None:
        raise ValueError("rng is required unless noiseless=True")
    return Observation(mean + sample_noise(scenario, rng))


def synthesize_rician(
    scenario: Scenario,
    schedule: PhaseSchedule,
    mask: FailureMask,
    realization: RicianChannelRealization,
    rng: Optional[np.random.Generator] = None,
    noiseless: bool = False,
) -> Observation:
    """Observation under a Rician RIS-UE channel and LoS BS-RIS channel.

    y_t = h_ru^T diag(phi_t * m) h_br s_t + n_t, with
    h_br = alpha_br a(p_bs) and
    h_ru = alpha_ru (sqrt(K/(K+1)) a(p) + sqrt(1/(K+1)) h_nlos).
    """
    if realization.exact_los:
        # K -> inf limit: identical code path as the deterministic model with
        # alpha = alpha_br * alpha_ru, so the two agree bit-for-bit
        mean = model_mean(
            realization.alpha_br * realization.alpha_ru,
            scenario.ue_true_position,
            scenario,
            schedule,
            mask.m,
        )
    else:
        a_bs = steering_vector(scenario.p_bs, scenario)
        a_ue = steering_vector(scenario.ue_true_position, scenario)
        h_br = realization.alpha_br * a_bs
        k = realization.k_factor
        h_ru = realization.alpha_ru * (
            np.sqrt(k / (k + 1.0)) * a_ue + np.sqrt(1.0 / (k + 1.0)) * realization.h_nlos
        )
        gamma = schedule.phi * mask.m[:, None]  # (N, T)
        mean = scenario.pilots * ((h_ru * h_br) @ gamma)
    if noiseless:
        return Observation(mean)
    if rng is None:
        raise ValueError("rng is required unless noiseless=True")
    return Observation(mean + sample_noise(scenario, rng))


def temporal_code(
    schedule_half: PhaseSchedule,
) -> Tuple[PhaseSchedule, Callable[[np.ndarray], np.ndarray]]:
    """Expand a T/2 schedule into +/- pairs and return the matching combiner.

    The expanded schedule sends phi_tilde_t on odd transmissions and
    -phi_tilde_t on even ones; the combiner maps a length-T observation to
    y_tilde_t = (y_{2t-1} - y_{2t}) / 2, which cancels any additive term that
    does not depend on the RIS configuration.
    """
    phi_h = schedule_half.phi
    n, t_half = phi_h.shape
    expanded = np.empty((n, 2 * t_half), dtype=complex)
    expanded[:, 0::2] = phi_h
    expanded[:, 1::2] = -phi_h

    def combiner(y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=complex).reshape(-1)
        if y.size != 2 * t_half:
            raise ValueError(f"expected a length-{2 * t_half} observation")
        return (y[0::2] - y[1::2]) / 2.0

    return PhaseSchedule(expanded), combiner
