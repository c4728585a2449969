"""Pacing-strategy optimization for individual time trials."""

__version__ = "0.1.0"

from .dynamics import EnvParams, PowerStrategy, SimOutcome, SimState, Status, Weather, simulate, simulate_batch
from .errors import CyclepaceError, FitError, InfeasibleCourseError, InputError, NumericalError
from .optimizer import OptimizationResult, PowerLevels, TemceConfig, exhaustive, optimize
from .power import OmniPDParams, RiderProfile, fit_omni_pd, omni_pd_inverse, omni_pd_power
from .track import GeoPoint, TrackGrid, build_grid, load_track, parse_gpx, segment_track

__all__ = [
    "CyclepaceError",
    "EnvParams",
    "FitError",
    "GeoPoint",
    "InfeasibleCourseError",
    "InputError",
    "NumericalError",
    "OmniPDParams",
    "OptimizationResult",
    "PowerLevels",
    "PowerStrategy",
    "RiderProfile",
    "SimOutcome",
    "SimState",
    "Status",
    "TemceConfig",
    "TrackGrid",
    "Weather",
    "build_grid",
    "exhaustive",
    "fit_omni_pd",
    "load_track",
    "omni_pd_inverse",
    "omni_pd_power",
    "optimize",
    "parse_gpx",
    "segment_track",
    "simulate",
    "simulate_batch",
]
