"""Expansion coefficients of Bergman-type kernels on model weights over C^n.

Symbolic machinery (exact rational or complex float) for the diagonal
asymptotics of weighted Bergman kernels, Toeplitz operators, their star
product, and Toeplitz operators with pseudodifferential amplitudes, together
with a brute-force quadrature oracle that cross-checks every coefficient
numerically.
"""

from .errors import (BergtoepError, InputError, PreconditionError,
                     BudgetError, ConditioningError)
from .polyalg import CRat, WirtingerPoly, KSeries

__all__ = [
    "BergtoepError", "InputError", "PreconditionError", "BudgetError",
    "ConditioningError", "CRat", "WirtingerPoly", "KSeries",
]

__version__ = "0.1.0"
