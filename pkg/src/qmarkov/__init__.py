"""Quantum-circuit simulation of Markov-chain updates at desk scale."""
from .errors import QMarkovError
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "QMarkovError", "__version__"]
