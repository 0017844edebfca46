"""Delayed reaction-diffusion systems: simulation, principal spectra and persistence analysis."""
__version__ = "0.1.0"

from .config import load_problem, load_settings
from .errors import PFDEError
from .model import DriverState, ProblemSpec, Segment
from .solver import integrate
from .spectrum import KSampler, principal_spectrum
from .structure import block_triangularize, classify_persistence, interaction_matrix

__all__ = [
    "DriverState",
    "KSampler",
    "PFDEError",
    "ProblemSpec",
    "Segment",
    "block_triangularize",
    "classify_persistence",
    "integrate",
    "interaction_matrix",
    "load_problem",
    "load_settings",
    "principal_spectrum",
]
