"""Master-equation simulation and parameter extraction for a single emitter in an optical cavity.

Public frequencies are ordinary Hz; the ``2 pi`` is applied internally.
"""

from .curve import SimCurve
from .model import (
    DiffusionQuadrature,
    DriveSpec,
    ModelSettings,
    ModelWarning,
    SystemParams,
    decay_vs_detuning,
    extract_decay_rate,
    ple_spectrum,
    saturation_curve,
    simulate_pulse_cycle,
    spectrum_map_2d,
)
from .optimize import FitResult, Objective, basin_hopping, nelder_mead
from .quantum import HilbertSpace, InvariantError, TruncationError

__version__ = "0.1.0"

__all__ = [
    "DiffusionQuadrature",
    "DriveSpec",
    "FitResult",
    "HilbertSpace",
    "InvariantError",
    "ModelSettings",
    "ModelWarning",
    "Objective",
    "SimCurve",
    "SystemParams",
    "TruncationError",
    "basin_hopping",
    "decay_vs_detuning",
    "extract_decay_rate",
    "nelder_mead",
    "ple_spectrum",
    "saturation_curve",
    "simulate_pulse_cycle",
    "spectrum_map_2d",
]
