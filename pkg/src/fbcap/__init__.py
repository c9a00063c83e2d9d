"""fbcap - certified bounds on Gaussian feedback capacity and the coding schemes that achieve them."""

from fbcap.bounds import BoundsReport, certified_upper_bound, h_sweep
from fbcap.config import RunConfig, validate_config
from fbcap.control import CodingScheme, stable_unstable_split, youla_controller
from fbcap.dualopt import DualSolution, solve_dual
from fbcap.freqgrid import build_grid
from fbcap.pipeline import run_pipeline
from fbcap.spectra import NoiseModel, StateSpace
from fbcap.synthesis import FirFilter, synthesize

__version__ = "0.1.0"
__all__ = [
    "BoundsReport",
    "CodingScheme",
    "DualSolution",
    "FirFilter",
    "NoiseModel",
    "RunConfig",
    "StateSpace",
    "build_grid",
    "certified_upper_bound",
    "h_sweep",
    "run_pipeline",
    "solve_dual",
    "stable_unstable_split",
    "synthesize",
    "validate_config",
    "youla_controller",
]
