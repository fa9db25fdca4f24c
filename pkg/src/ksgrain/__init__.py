"""Coarse-grained chaos numerics.

Partition entropies and KS-entropy estimates for maps on the unit square,
the log(q)/tau graininess bound and the logarithmic timescale, Ulam
transfer operators and mixing correlations, and exact finite-N quantum
checks for the quantized cat map.
"""

__version__ = "0.1.0"

from .errors import KsgrainError, NumericalError, ValidationError  # noqa: E402

__all__ = ["__version__", "KsgrainError", "NumericalError", "ValidationError"]
