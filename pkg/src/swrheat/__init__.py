"""Schwarz waveform relaxation for the semilinear heat equation on a cylinder."""

from .errors import SwrError
from .model import DomainSpec, Decomposition, Nonlinearity, make_nonlinearity
from .solver import SolverOptions, SpaceTimeField
from .swr import SwrConfig, SwrProblem, run

__all__ = [
    "SwrError", "DomainSpec", "Decomposition", "Nonlinearity", "make_nonlinearity",
    "SolverOptions", "SpaceTimeField", "SwrConfig", "SwrProblem", "run",
]
__version__ = "0.1.0"
