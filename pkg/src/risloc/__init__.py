"""RIS-aided near-field localization under pixel failures.

Scene synthesis, theoretical bounds (CRB / misspecified-CRB), joint
localization-and-failure-diagnosis estimators, and a Monte-Carlo harness.
"""

__version__ = "0.1.0"

from .scene import (
    DegenerateGeometryError,
    FailureMask,
    Observation,
    PhaseSchedule,
    RicianChannelRealization,
    Scenario,
    SingularDensityError,
    combined_response,
    combined_response_derivatives,
    failure_coeff_pdf,
    fault_system_matrix,
    grid_element_positions,
    model_mean,
    random_phase_schedule,
    sample_failure_mask,
    sample_fixed_count_mask,
    sample_noise,
    sample_rician_realization,
    steering_jacobian,
    steering_vector,
    synthesize,
    synthesize_rician,
    temporal_code,
)
from .estimators import (
    Estimate,
    GridSpec,
    HypothesisCost,
    LocalizeResult,
    NonIdentifiableError,
    candidate_zeta,
    hypothesis_cost,
    joint_zeta_ls,
    l1_jlfd,
    lasso_mask,
    localize_fixed_mask,
    room_grid,
    spherical_to_cartesian,
    successive_jlfd,
    unit_disk_refine,
)
from .harness import (
    AxisPoint,
    ExperimentConfig,
    MetricsRow,
    TrialResult,
    axis_points,
    desk_grid,
    desk_scenario,
    fraunhofer_distance,
    load_config,
    metrics,
    room_scenario,
    run_point,
    run_sweep,
    save_config,
    write_metrics_csv,
    write_sidecar,
    write_trials_csv,
)
from .bounds import (
    BoundReport,
    ExtendedParamVector,
    ParamVector,
    SingularFimError,
    bound_report,
    crb_knownloc,
    crb_perfect,
    fim_knownloc,
    fim_perfect,
    lower_bound,
    mcrb,
    mcrb_matrices,
    mean_and_jacobian,
    pseudo_true,
)

__all__ = [name for name in dir() if not name.startswith("_")]
