"""Cubature Kalman filtering with innovation-based and robust covariance-matching adaptation."""

from .adaptive import (
    AdaptiveConfig,
    EpochRecord,
    SlidingWindow,
    ackf_step,
    cmrackf_step,
    epoch_variance,
    estimate_Q,
    estimate_R,
    innovation_cov_plain,
    innovation_cov_weighted,
    window_weights,
)
from .ckf import Gaussian, SingularInnovationCovariance, ckf_step, cubature_points, predict, update
from .harness import (
    OutlierModel,
    Setup,
    monte_carlo,
    position_rmse,
    run_filter,
    simulate_measurements,
    simulate_truth,
)
from .models import (
    NoiseSpec,
    SensorCoincidence,
    SystemModel,
    TargetScenario,
    linear_model,
    target_measure,
    target_model,
    target_process,
)
from .numerics import LengthMismatch, NotPositiveDefinite, cholesky_factor, spd_project, symmetrize

__version__ = "0.1.0"
