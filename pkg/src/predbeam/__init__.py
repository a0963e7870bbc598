"""Predictive beam tracking for joint radar-communication vehicular links.

Gaussian message passing on a factor graph tracks each vehicle's angle, range,
speed and reflection coefficient from radar echoes; an EKF and a
noise-inflated feedback scheme serve as baselines.
"""
from .baselines import EKFTracker, EkfState, ekf_predict, ekf_update, feedback_config
from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .gaussian import ComplexGaussian, Gaussian
from .tracker import BeliefSet, FactorGraphTracker, TrackerConfig, track_step

__version__ = "0.1.0"

__all__ = [
    "BeliefSet",
    "ComplexGaussian",
    "ConfigError",
    "EKFTracker",
    "EkfState",
    "FactorGraphTracker",
    "Gaussian",
    "ScenarioConfig",
    "TrackerConfig",
    "ekf_predict",
    "ekf_update",
    "feedback_config",
    "load_config",
    "parse_config",
    "track_step",
]
