"""Deterministic multi-agent maze solving with free-energy benchmarking."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
