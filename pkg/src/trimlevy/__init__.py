"""Trimmed Lévy processes: path operators, J1 distances and Monte Carlo checks."""

from .paths import CadlagPath, DomainError, JumpPoint, TimeChange
from .trim import TrimSpec, apply_trim, continuity_certificate, tie_sets

__version__ = "0.1.0"

__all__ = [
    "CadlagPath",
    "DomainError",
    "JumpPoint",
    "TimeChange",
    "TrimSpec",
    "apply_trim",
    "continuity_certificate",
    "tie_sets",
]
