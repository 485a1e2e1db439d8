"""Exact simulation of small transverse-field Ising chains with trapped-ion couplings."""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
