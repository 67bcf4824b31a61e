"""Safe Bayesian tuning of PI current controllers on a simulated inverter microgrid."""

from safegrid.frames import Dq0Frame, ThreePhase, grid_angle, inverse_park, park
from safegrid.plant import GridParams, PlantModel, build_lc_plant, build_rl_plant, zoh_discretize
from safegrid.control import PiGains, PiState, pi_reset, pi_step
from safegrid.env import EnvConfig, MicrogridEnv, episode_performance, reward
from safegrid.gp import GpModel, KernelParams, confidence_bounds
from safegrid.safeopt import ParamBounds, SafeOpt, SafeSetEmpty
from safegrid.runner import ExperimentConfig, landscape_sweep, run_episode, run_tuning

__version__ = "0.1.0"

__all__ = [
    "Dq0Frame",
    "ThreePhase",
    "grid_angle",
    "inverse_park",
    "park",
    "GridParams",
    "PlantModel",
    "build_lc_plant",
    "build_rl_plant",
    "zoh_discretize",
    "PiGains",
    "PiState",
    "pi_reset",
    "pi_step",
    "EnvConfig",
    "MicrogridEnv",
    "episode_performance",
    "reward",
    "GpModel",
    "KernelParams",
    "confidence_bounds",
    "ParamBounds",
    "SafeOpt",
    "SafeSetEmpty",
    "ExperimentConfig",
    "landscape_sweep",
    "run_episode",
    "run_tuning",
]
