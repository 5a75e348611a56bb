"""Delay-Doppler path estimation for bistatic OFDM sensing.

Two estimators are provided: a periodogram with ordered-statistics CFAR
detection (:func:`cfar_pipeline`) and successive maximum-likelihood path
extraction with Gauss-Newton refinement (:func:`estimate`).
"""

from .cfar import CfarConfig, Detection, cfar_pipeline, design_false_alarm_rate, os_cfar_detect
from .evaluation import (
    MatchBoundary,
    assign_targets,
    detection_probability,
    los_gain_profile,
    rmse,
    run_estimator,
    run_sweep,
)
from .exceptions import (
    AlignmentError,
    ConfigError,
    DegenerateGeometryError,
    DelayDopplerError,
    IllConditionedError,
    NoCandidate,
    NumericalError,
    ParseError,
    RangeError,
    SingularFisherError,
    UndefinedMetricError,
    ValidationError,
)
from .mle import EstimatedPath, MleConfig, crb_covariance, estimate, model_jacobian
from .signal_model import (
    ChannelFrame,
    PathParams,
    RadarGrid,
    Scene,
    default_grid,
    default_scene,
    synthesize_frame,
    synthesize_scene_frame,
)
from .spectrum import DelayDopplerSpectrum, periodogram

__all__ = [
    "CfarConfig",
    "Detection",
    "cfar_pipeline",
    "design_false_alarm_rate",
    "os_cfar_detect",
    "MatchBoundary",
    "assign_targets",
    "detection_probability",
    "los_gain_profile",
    "rmse",
    "run_estimator",
    "run_sweep",
    "AlignmentError",
    "ConfigError",
    "DegenerateGeometryError",
    "DelayDopplerError",
    "IllConditionedError",
    "NoCandidate",
    "NumericalError",
    "ParseError",
    "RangeError",
    "SingularFisherError",
    "UndefinedMetricError",
    "ValidationError",
    "EstimatedPath",
    "MleConfig",
    "crb_covariance",
    "estimate",
    "model_jacobian",
    "ChannelFrame",
    "PathParams",
    "RadarGrid",
    "Scene",
    "default_grid",
    "default_scene",
    "synthesize_frame",
    "synthesize_scene_frame",
    "DelayDopplerSpectrum",
    "periodogram",
]

__version__ = "0.1.0"
