"""Monte Carlo benchmark: scenario files, trial execution, metrics and outputs."""
from ..config import ScenarioConfig, load_config
from .outputs import compute_cdf, emit_outputs
from .simulate import SCHEMES, TrialRecord, run_monte_carlo, run_trial

__all__ = ["SCHEMES", "ScenarioConfig", "TrialRecord", "compute_cdf", "emit_outputs",
           "load_config", "run_monte_carlo", "run_trial"]
