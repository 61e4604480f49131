"""Bilinear rate-splitting precoding for FDD massive MIMO downlinks.

The package computes deterministic precoder transforms from channel
second-order statistics (private streams via a Lagrangian-dual /
quadratic-transform ascent, the common stream via an iterative max-min
SINR increase, the power split via golden-section search), an iterative
weighted-MMSE baseline that works on MMSE channel estimates, and a seeded
Monte-Carlo harness that sweeps the downlink transmit power.
"""

from .channel import (
    CovarianceSet,
    ScenarioConfig,
    UserGeometry,
    build_covariance,
    drop_users,
    sample_channels,
    steering_vector,
)
from .training import (
    ObservationModel,
    build_pilot_matrix,
    observation_covariances,
    observe,
    training_noise_variance,
)
from .sinr import (
    PrecoderTransforms,
    SinrOperators,
    common_sinr,
    hardening_rates,
    instantaneous_rates,
    private_sinr,
    quartic_moment,
)
from .private import optimize_private
from .common import optimize_common
from .powersplit import evaluate_split, golden_section, optimize_split
from .iwmmse import run_iwmmse
from .errors import ConfigError, InvalidCovarianceError, NumericalBreakdown

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CovarianceSet",
    "InvalidCovarianceError",
    "NumericalBreakdown",
    "ObservationModel",
    "PrecoderTransforms",
    "ScenarioConfig",
    "SinrOperators",
    "UserGeometry",
    "build_covariance",
    "build_pilot_matrix",
    "common_sinr",
    "drop_users",
    "evaluate_split",
    "golden_section",
    "hardening_rates",
    "instantaneous_rates",
    "observation_covariances",
    "observe",
    "optimize_common",
    "optimize_private",
    "optimize_split",
    "private_sinr",
    "quartic_moment",
    "run_iwmmse",
    "sample_channels",
    "steering_vector",
    "training_noise_variance",
]
