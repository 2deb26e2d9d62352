"""Simulation and diagnostics for k-equivariant wave maps into the sphere."""

__version__ = "0.1.0"

from .analysis import (RadiationFit, RunVerdict, Thresholds, Verdict, classify_outcome,
                       energy_budget, extract_blowup_profile, extract_radiation_global,
                       track_scales)
from .bubbles import (BubbleFit, SingleFit, proximity, proximity_min, q_eval,
                      single_bubble_fit, two_bubble_state)
from .evolution import StepControl, Termination, Trajectory, evolve, linear_evolve, step
from .exceptions import (ConfigError, InsufficientDataError, NumericError, ParameterError,
                         SnapshotFormatError, WaveMapsError)
from .functionals import e_norm, energy, h_norm, local_e_norm, strichartz_norm
from .grid import FieldState, RadialGrid, d_r, integrate, make_grid, radial_laplacian

__all__ = [
    "__version__",
    "RadialGrid", "FieldState", "make_grid", "integrate", "d_r", "radial_laplacian",
    "StepControl", "Termination", "Trajectory", "evolve", "linear_evolve", "step",
    "energy", "h_norm", "e_norm", "local_e_norm", "strichartz_norm",
    "BubbleFit", "SingleFit", "q_eval", "two_bubble_state", "single_bubble_fit",
    "proximity", "proximity_min",
    "RadiationFit", "RunVerdict", "Thresholds", "Verdict", "extract_radiation_global",
    "extract_blowup_profile", "track_scales", "energy_budget", "classify_outcome",
    "WaveMapsError", "ParameterError", "NumericError", "SnapshotFormatError",
    "ConfigError", "InsufficientDataError",
]
