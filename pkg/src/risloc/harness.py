"""Monte-Carlo experiment orchestration: configs, sweeps, metrics, persistence.

Sweeps run over SNR (dB), failure probability, UE distance and Rician K-factor
axes.  Seeds derive deterministically from the master seed so a (seed, config)
pair maps to a byte-identical CSV.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy
import yaml
from scipy.spatial.distance import pdist

from . import __version__
from .bounds import BoundReport, bound_report
from .estimators import (
    GridSpec,
    l1_jlfd,
    localize_fixed_mask,
    successive_jlfd,
)
from .scene import (
    FailureMask,
    PhaseSchedule,
    Scenario,
    grid_element_positions,
    random_phase_schedule,
    sample_failure_mask,
    sample_fixed_count_mask,
    sample_rician_realization,
    synthesize,
    synthesize_rician,
)

OUTPUT_DIR_ENV = "RISLOC_OUTPUT_DIR"

SPEED_OF_LIGHT = 299_792_458.0
CARRIER_FREQ_HZ = 28e9
WAVELENGTH = SPEED_OF_LIGHT / CARRIER_FREQ_HZ  # ~10.71 mm

_UNIT_DIAGONAL = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)

ESTIMATOR_NAMES = ("agnostic", "l1", "successive")
BOUND_NAMES = ("crb_perfect", "crb_knownloc", "lb")

# fixed sub-seeds for the deterministic seed tree
_SEED_SCHEDULE = 7001
_SEED_MASK = 7002
_SEED_LOCATIONS = 7003


# ---------------------------------------------------------------------------
# Scenario presets
# ---------------------------------------------------------------------------

def room_scenario(noise_psd: float = 1.0) -> Scenario:
    """Large-scale scene: 20x20 half-wavelength RIS, BS at 10 m, UE at 4 m."""
    return Scenario(
        p_bs=10.0 * _UNIT_DIAGONAL,
        p_ris=np.zeros(3),
        element_positions=grid_element_positions(20, 20, WAVELENGTH / 2.0),
        wavelength=WAVELENGTH,
        num_transmissions=20,
        pilot_energy=1.0,
        noise_psd=noise_psd,
        ue_true_position=4.0 * _UNIT_DIAGONAL,
        channel_gain_true=1.0 + 0.0j,
    )


def desk_scenario(noise_psd: float = 1.0) -> Scenario:
    """Small, fast scene: 8x8 RIS with the UE inside its radiative near field.

    The 8x8 aperture has a Fraunhofer distance of roughly 0.53 m, so the UE
    sits at 0.3 m to keep the wavefront curvature (and hence range)
    observable.
    """
    return Scenario(
        p_bs=1.0 * _UNIT_DIAGONAL,
        p_ris=np.zeros(3),
        element_positions=grid_element_positions(8, 8, WAVELENGTH / 2.0),
        wavelength=WAVELENGTH,
        num_transmissions=16,
        pilot_energy=1.0,
        noise_psd=noise_psd,
        ue_true_position=0.3 * _UNIT_DIAGONAL,
        channel_gain_true=1.0 + 0.0j,
    )


def desk_grid() -> GridSpec:
    """Search grid matched to the desk scenario (K = 61, 2 refine levels)."""
    return GridSpec(
        distance_range=(0.05, 1.0),
        azimuth_range=(0.0, np.pi / 2),
        elevation_range=(0.0, np.pi / 2),
        points_per_axis=61,
        refine_levels=2,
        distance_slices=21,
    )


_PRESETS = {"desk": desk_scenario, "room": room_scenario}


def fraunhofer_distance(scenario: Scenario) -> float:
    """2 D^2 / lambda with D the largest distance between any two elements."""
    if scenario.num_elements < 2:
        raise ValueError("Fraunhofer distance needs at least two elements")
    d = float(pdist(scenario.element_positions).max())
    return 2.0 * d**2 / scenario.wavelength


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved description of one sweep.

    ``distance`` and ``k_factor`` axes are optional; an empty tuple means the
    axis is pinned to the preset geometry / the deterministic LoS channel.
    ``mask_mode`` selects between one fixed-count mask per axis point
    (estimator studies) and Bernoulli-located failures with coefficients
    redrawn every trial (bound studies; failure locations stay fixed across
    SNR points for a given p_fail).
    """

    preset: str = "desk"
    grid: GridSpec = field(default_factory=desk_grid)
    snr_db: Tuple[float, ...] = (20.0,)
    p_fail: Tuple[float, ...] = (0.01,)
    distance: Tuple[float, ...] = ()
    k_factor: Tuple[float, ...] = ()
    trials: int = 100
    estimators: Tuple[str, ...] = ("agnostic",)
    bounds: Tuple[str, ...] = ()
    mask_mode: str = "fixed-count"
    master_seed: int = 0
    xi: Optional[float] = None
    num_failures: Optional[int] = None
    workers: int = 0
    output: Optional[str] = None
    noiseless: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.snr_db or not self.p_fail:
            raise ValueError("sweep axes must be nonempty")
        if self.preset not in _PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if self.mask_mode not in ("fixed-count", "bernoulli"):
            raise ValueError(f"unknown mask_mode {self.mask_mode!r}")
        for e in self.estimators:
            if e not in ESTIMATOR_NAMES:
                raise ValueError(f"unknown estimator {e!r}")
        for b in self.bounds:
            if b not in BOUND_NAMES:
                raise ValueError(f"unknown bound {b!r}")
        for name in ("snr_db", "p_fail", "distance", "k_factor", "estimators", "bounds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def base_scenario(self) -> Scenario:
        return _PRESETS[self.preset]()


@dataclass(frozen=True)
class AxisPoint:
    """One grid point of the sweep (index is its canonical ordinal)."""

    index: int
    snr_db: float
    p_fail: float
    pfail_index: int
    distance: Optional[float] = None
    k_factor: Optional[float] = None


def axis_points(config: ExperimentConfig) -> List[AxisPoint]:
    dists: Sequence[Optional[float]] = config.distance or (None,)
    ks: Sequence[Optional[float]] = config.k_factor or (None,)
    points = []
    for i, (snr, (pi, pf), d, k) in enumerate(
        itertools.product(config.snr_db, enumerate(config.p_fail), dists, ks)
    ):
        points.append(AxisPoint(i, float(snr), float(pf), pi, d, k))
    return points


@dataclass
class TrialResult:
    """Flat per-(trial, estimator) record; one CSV row each."""

    snr_db: float
    p_fail: float
    distance: float
    k_factor: float
    trial: int
    estimator: str
    alpha_hat: complex
    p_hat: np.ndarray
    pos_sq_err: float
    mask_sq_err: float
    mask_norm_sq: float
    n_detected: int
    iterations: int
    crb_perfect: float
    crb_knownloc: float
    lb_pos: float
    error: str = ""


# ---------------------------------------------------------------------------
# Configuration file IO (complex numbers stored as [re, im])
# ---------------------------------------------------------------------------

def config_to_dict(config: ExperimentConfig) -> dict:
    d = dataclasses.asdict(config)
    g = d.pop("grid")
    d["grid"] = {k: list(v) if isinstance(v, tuple) else v for k, v in g.items()}
    for key in ("snr_db", "p_fail", "distance", "k_factor", "estimators", "bounds"):
        d[key] = list(d[key])
    return d


def config_from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    if "grid" in d and d["grid"] is not None:
        g = dict(d["grid"])
        for key in ("distance_range", "azimuth_range", "elevation_range"):
            if key in g:
                g[key] = tuple(g[key])
        d["grid"] = GridSpec(**g)
    for key in ("snr_db", "p_fail", "distance", "k_factor", "estimators", "bounds"):
        if key in d and d[key] is not None:
            d[key] = tuple(d[key])
    return ExperimentConfig(**d)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(yaml.safe_load(fh))


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(config), fh, sort_keys=True)


# ---------------------------------------------------------------------------
# Sweep execution
# ---------------------------------------------------------------------------

def _noise_psd_for_snr(scenario: Scenario, snr_db: float) -> float:
    snr = 10.0 ** (snr_db / 10.0)
    return abs(scenario.channel_gain_true) ** 2 * scenario.pilot_energy / snr


def point_scenario(config: ExperimentConfig, point: AxisPoint) -> Scenario:
    scenario = config.base_scenario()
    if point.distance is not None:
        u = scenario.ue_true_position - scenario.p_ris
        u = u / np.linalg.norm(u)
        scenario = scenario.with_ue_position(scenario.p_ris + point.distance * u)
    return scenario.with_noise_psd(_noise_psd_for_snr(scenario, point.snr_db))


def experiment_schedule(config: ExperimentConfig, scenario: Scenario) -> PhaseSchedule:
    rng = np.random.default_rng([config.master_seed, _SEED_SCHEDULE])
    return random_phase_schedule(
        scenario.num_elements, scenario.num_transmissions, rng
    )


def _point_mask(
    config: ExperimentConfig, point: AxisPoint, num_elements: int
) -> FailureMask:
    """Fixed-count mask shared by every trial of this axis point."""
    rng = np.random.default_rng([config.master_seed, _SEED_MASK, point.pfail_index])
    count = (
        config.num_failures
        if config.num_failures is not None
        else int(np.floor(num_elements * point.p_fail))
    )
    return sample_fixed_count_mask(count, rng, num_elements)


def _bernoulli_locations(
    config: ExperimentConfig, point: AxisPoint, num_elements: int
) -> np.ndarray:
    """Failure locations for Bernoulli mode, fixed across SNR for a p_fail."""
    rng = np.random.default_rng(
        [config.master_seed, _SEED_LOCATIONS, point.pfail_index]
    )
    return rng.random(num_elements) < point.p_fail


def _trial_mask(
    config: ExperimentConfig,
    point: AxisPoint,
    num_elements: int,
    fixed_mask: Optional[FailureMask],
    locations: Optional[np.ndarray],
    rng: np.random.Generator,
) -> FailureMask:
    if config.mask_mode == "fixed-count":
        assert fixed_mask is not None
        return fixed_mask
    # Bernoulli mode: locations frozen, coefficients redrawn each trial
    assert locations is not None
    c = locations.astype(int)
    n_fail = int(c.sum())
    zeta = np.ones(num_elements, dtype=complex)
    if n_fail:
        kappa = 1.0 - rng.random(n_fail)
        psi = rng.uniform(-np.pi, np.pi, n_fail)
        zeta[locations] = kappa * np.exp(1j * psi)
    return FailureMask(c=c, zeta=zeta)


def _effective_pfail(p_fail: float, num_elements: int) -> float:
    if 0.0 < p_fail < 1.0:
        return p_fail
    return 1.0 / (2.0 * num_elements)


def _run_estimator(
    name: str,
    y: np.ndarray,
    schedule: PhaseSchedule,
    scenario: Scenario,
    config: ExperimentConfig,
    point: AxisPoint,
):
    """Returns (alpha_hat, p_hat, m_hat, n_detected, iterations)."""
    n = scenario.num_elements
    if name == "agnostic":
        loc = localize_fixed_mask(
            y, schedule, np.ones(n, dtype=complex), config.grid, scenario
        )
        return loc.alpha_hat, loc.p_hat, np.ones(n, dtype=complex), 0, 1
    if name == "l1":
        xi = config.xi if config.xi is not None else 2.0 * np.sqrt(scenario.snr)
        est = l1_jlfd(y, schedule, scenario, config.grid, xi=xi)
        return (
            est.alpha_hat,
            est.p_hat,
            est.m_hat,
            len(est.failing_set),
            est.info["iterations"],
        )
    if name == "successive":
        est = successive_jlfd(
            y,
            schedule,
            scenario,
            config.grid,
            p_fail=_effective_pfail(point.p_fail, n),
        )
        return (
            est.alpha_hat,
            est.p_hat,
            est.m_hat,
            len(est.failing_set),
            est.info["iterations"],
        )
    raise ValueError(f"unknown estimator {name!r}")


def run_point(config: ExperimentConfig, point: AxisPoint) -> List[TrialResult]:
    """All trials of one axis point, in canonical (trial, estimator) order.

    Estimator exceptions are caught per trial and recorded in the ``error``
    column; they never abort the sweep.
    """
    scenario = point_scenario(config, point)
    schedule = experiment_schedule(config, scenario)
    n = scenario.num_elements
    fixed_mask = (
        _point_mask(config, point, n) if config.mask_mode == "fixed-count" else None
    )
    locations = (
        _bernoulli_locations(config, point, n)
        if config.mask_mode == "bernoulli"
        else None
    )
    bound_cache: Dict[bytes, BoundReport] = {}
    results: List[TrialResult] = []
    row_names = list(config.estimators) if config.estimators else ["none"]
    for trial in range(config.trials):
        rng = np.random.default_rng([config.master_seed, point.index, trial])
        mask = _trial_mask(config, point, n, fixed_mask, locations, rng)
        if point.k_factor is None:
            obs = synthesize(
                scenario, schedule, mask, rng=rng, noiseless=config.noiseless
            )
        else:
            realization = sample_rician_realization(
                1.0, scenario.channel_gain_true, point.k_factor, n, rng
            )
            obs = synthesize_rician(
                scenario, schedule, mask, realization, rng=rng,
                noiseless=config.noiseless,
            )
        crb_p = crb_k = lb_pos = np.nan
        if config.bounds:
            key = mask.m.tobytes()
            if key not in bound_cache:
                bound_cache[key] = bound_report(mask, scenario, schedule, config.grid)
            rep = bound_cache[key]
            crb_p = rep.crb_perfect_pos if "crb_perfect" in config.bounds else np.nan
            crb_k = rep.crb_knownloc_pos if "crb_knownloc" in config.bounds else np.nan
            lb_pos = rep.lb_pos if "lb" in config.bounds else np.nan
        mask_norm_sq = float(np.linalg.norm(mask.m) ** 2)
        for name in row_names:
            common = dict(
                snr_db=point.snr_db,
                p_fail=point.p_fail,
                distance=point.distance if point.distance is not None else np.nan,
                k_factor=point.k_factor if point.k_factor is not None else np.nan,
                trial=trial,
                estimator=name,
                crb_perfect=crb_p,
                crb_knownloc=crb_k,
                lb_pos=lb_pos,
                mask_norm_sq=mask_norm_sq,
            )
            if name == "none":
                results.append(
                    TrialResult(
                        alpha_hat=0j,
                        p_hat=np.full(3, np.nan),
                        pos_sq_err=np.nan,
                        mask_sq_err=np.nan,
                        n_detected=0,
                        iterations=0,
                        **common,
                    )
                )
                continue
            try:
                alpha_hat, p_hat, m_hat, n_det, iters = _run_estimator(
                    name, obs.y, schedule, scenario, config, point
                )
                results.append(
                    TrialResult(
                        alpha_hat=alpha_hat,
                        p_hat=p_hat,
                        pos_sq_err=float(
                            np.sum((p_hat - scenario.ue_true_position) ** 2)
                        ),
                        mask_sq_err=float(np.linalg.norm(m_hat - mask.m) ** 2),
                        n_detected=n_det,
                        iterations=iters,
                        **common,
                    )
                )
            except Exception as exc:  # per-trial isolation
                results.append(
                    TrialResult(
                        alpha_hat=0j,
                        p_hat=np.full(3, np.nan),
                        pos_sq_err=np.nan,
                        mask_sq_err=np.nan,
                        n_detected=0,
                        iterations=0,
                        error=f"{type(exc).__name__}: {exc}",
                        **common,
                    )
                )
    return results


def _run_point_star(args) -> List[TrialResult]:
    return run_point(*args)


def run_sweep(config: ExperimentConfig) -> List[TrialResult]:
    """Every axis point in canonical order (optionally in a process pool)."""
    points = axis_points(config)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_run_point_star, [(config, p) for p in points]))
    else:
        chunks = [run_point(config, p) for p in points]
    return [r for chunk in chunks for r in chunk]


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass
class MetricsRow:
    """Aggregate over the trials of one (axis point, estimator) group.

    Bound columns are on the RMSE scale: sqrt of the trial-averaged
    position-block traces.
    """

    snr_db: float
    p_fail: float
    distance: float
    k_factor: float
    estimator: str
    trials_ok: int
    trials_failed: int
    rmse: float
    nmse: float
    mean_detected: float
    sqrt_crb_perfect: float
    sqrt_crb_knownloc: float
    sqrt_lb: float


def metrics(results: Sequence[TrialResult]) -> List[MetricsRow]:
    if not results:
        raise ValueError("no results to aggregate")
    keyfn = lambda r: (r.snr_db, r.p_fail, r.distance, r.k_factor, r.estimator)
    groups: Dict[tuple, List[TrialResult]] = {}
    order = []
    for r in results:
        k = keyfn(r)
        if k not in groups:
            groups[k] = []
            order.append(k)
        groups[k].append(r)

    def _nanmean(vals):
        vals = [v for v in vals if np.isfinite(v)]
        return float(np.mean(vals)) if vals else float("nan")

    rows = []
    for k in order:
        rs = groups[k]
        ok = [r for r in rs if not r.error]
        rows.append(
            MetricsRow(
                snr_db=k[0],
                p_fail=k[1],
                distance=k[2],
                k_factor=k[3],
                estimator=k[4],
                trials_ok=len(ok),
                trials_failed=len(rs) - len(ok),
                rmse=float(np.sqrt(_nanmean([r.pos_sq_err for r in ok])))
                if ok
                else float("nan"),
                nmse=_nanmean([r.mask_sq_err / r.mask_norm_sq for r in ok]),
                mean_detected=_nanmean([float(r.n_detected) for r in ok]),
                sqrt_crb_perfect=float(np.sqrt(_nanmean([r.crb_perfect for r in rs]))),
                sqrt_crb_knownloc=float(
                    np.sqrt(_nanmean([r.crb_knownloc for r in rs]))
                ),
                sqrt_lb=float(np.sqrt(_nanmean([r.lb_pos for r in rs]))),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

TRIAL_COLUMNS = [
    ("snr_db", "dB"),
    ("p_fail", "unitless"),
    ("distance", "m (nan = preset geometry)"),
    ("k_factor", "unitless Rician K (nan = deterministic LoS)"),
    ("trial", "index"),
    ("estimator", "name"),
    ("alpha_re", "unitless"),
    ("alpha_im", "unitless"),
    ("px", "m"),
    ("py", "m"),
    ("pz", "m"),
    ("pos_sq_err", "m^2"),
    ("mask_sq_err", "unitless"),
    ("mask_norm_sq", "unitless"),
    ("n_detected", "count"),
    ("iterations", "count"),
    ("crb_perfect", "m^2"),
    ("crb_knownloc", "m^2"),
    ("lb_pos", "m^2"),
    ("error", "empty when the trial succeeded"),
]


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def output_dir(config: Optional[ExperimentConfig] = None) -> Path:
    if config is not None and config.output:
        return Path(config.output)
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def write_trials_csv(results: Sequence[TrialResult], path) -> None:
    """Stable CSV: '#'-prefixed unit header, then one row per trial result."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("# per-trial results; column units:\n")
        for name, unit in TRIAL_COLUMNS:
            fh.write(f"#   {name}: {unit}\n")
        fh.write(",".join(name for name, _ in TRIAL_COLUMNS) + "\n")
        for r in results:
            row = [
                _fmt(r.snr_db),
                _fmt(r.p_fail),
                _fmt(r.distance),
                _fmt(r.k_factor),
                _fmt(r.trial),
                r.estimator,
                _fmt(r.alpha_hat.real),
                _fmt(r.alpha_hat.imag),
                _fmt(r.p_hat[0]),
                _fmt(r.p_hat[1]),
                _fmt(r.p_hat[2]),
                _fmt(r.pos_sq_err),
                _fmt(r.mask_sq_err),
                _fmt(r.mask_norm_sq),
                _fmt(r.n_detected),
                _fmt(r.iterations),
                _fmt(r.crb_perfect),
                _fmt(r.crb_knownloc),
                _fmt(r.lb_pos),
                r.error.replace(",", ";").replace("\n", " "),
            ]
            fh.write(",".join(row) + "\n")


METRIC_COLUMNS = [
    ("snr_db", "dB"),
    ("p_fail", "unitless"),
    ("distance", "m"),
    ("k_factor", "unitless"),
    ("estimator", "name"),
    ("trials_ok", "count"),
    ("trials_failed", "count"),
    ("rmse", "m"),
    ("nmse", "unitless"),
    ("mean_detected", "count"),
    ("sqrt_crb_perfect", "m"),
    ("sqrt_crb_knownloc", "m"),
    ("sqrt_lb", "m"),
]


def write_metrics_csv(rows: Sequence[MetricsRow], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("# aggregated metrics; column units:\n")
        for name, unit in METRIC_COLUMNS:
            fh.write(f"#   {name}: {unit}\n")
        fh.write(",".join(name for name, _ in METRIC_COLUMNS) + "\n")
        for r in rows:
            fh.write(
                ",".join(
                    _fmt(getattr(r, name)) if name != "estimator" else r.estimator
                    for name, _ in METRIC_COLUMNS
                )
                + "\n"
            )


def write_sidecar(config: ExperimentConfig, path) -> None:
    """JSON sidecar echoing the resolved config plus version info."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "config": config_to_dict(config),
        "versions": {
            "risloc": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
