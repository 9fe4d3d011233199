"""Tuning and stress-testing of CUSUM and chi-squared residual detectors for LTI plants."""

from .attacks import (
    AttackPlan,
    BoundEnvelope,
    DirectionKind,
    attack_delta,
    chi2_bound_envelope,
    cusum_bound_envelope,
    split_error_trajectories,
)
from .detectors import Chi2Config, CusumConfig, CusumState, chi2_update, cusum_update
from .experiments import (
    FalseAlarmEstimate,
    attack_experiment,
    boundedness_experiment,
    estimate_false_alarm_rate,
    ratio_sweep,
    table1,
)
from .numerics import (
    ContractionNorm,
    contraction_norm,
    dare_solve,
    inverse_regularized_lower_gamma,
    regularized_lower_gamma,
    symmetric_sqrt,
    top_right_singular_vector,
)
from .plant import KalmanDesign, LtiModel, SimState, StepRecord, design_filter, step, warm_up
from .reactor import reactor_fixture
from .tuning import (
    ArlApproximation,
    TuningResult,
    bias_lower_bound,
    build_markov_chain,
    chi2_threshold,
    drift_boundary,
    shifted_chi2_cdf,
    solve_cusum_threshold,
)

__version__ = "0.1.0"
