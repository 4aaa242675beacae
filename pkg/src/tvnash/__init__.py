"""Fixed-step distributed Nash equilibrium seeking over time-varying networks."""
from .cournot import CournotInstance, CournotRanges, MarketStructure, generate_instance
from .engine import RunConfig, Trace, centralized_ne, run
from .game import GameConstants, GameInstance, estimate_constants
from .kernels import BACKEND
from .network import GraphSequence, WeightedDigraph, metropolis_weights, spectral_certificate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CournotInstance",
    "CournotRanges",
    "GameConstants",
    "GameInstance",
    "GraphSequence",
    "MarketStructure",
    "RunConfig",
    "Trace",
    "WeightedDigraph",
    "centralized_ne",
    "estimate_constants",
    "generate_instance",
    "metropolis_weights",
    "run",
    "spectral_certificate",
]
