"""Numerical certification toolkit for exponential sums f(z) = sum a_k exp(w^k z)."""

from .expsum import ExpSum, derivative, evaluate, log_max_modulus, max_modulus, psi
from .tower import TowerBracket, TowerReal

__all__ = [
    "ExpSum",
    "evaluate",
    "derivative",
    "psi",
    "max_modulus",
    "log_max_modulus",
    "TowerReal",
    "TowerBracket",
]

__version__ = "0.1.0"
