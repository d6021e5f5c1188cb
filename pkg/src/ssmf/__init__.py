"""Numerical toolkit for Fourier decay of self-similar measures on the line."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import NumericGuard, SsmfError, ValidationError
from .fourier import decay_scan, ft_bruteforce, ft_homogeneous_product, ft_lattice
from .measure import IfsSpec, OriginalIfsSpec, load_spec, validate_ifs

__all__ = [
    "IfsSpec",
    "NumericGuard",
    "OriginalIfsSpec",
    "SsmfError",
    "ValidationError",
    "decay_scan",
    "ft_bruteforce",
    "ft_homogeneous_product",
    "ft_lattice",
    "load_spec",
    "validate_ifs",
    "__version__",
]
