"""Exceptions shared across the package, each carrying a CLI exit code."""


class BergtoepError(Exception):
    exit_code = 1


class InputError(BergtoepError):
    """Malformed input: bad JSON, bad exponents, inconsistent dimensions."""
    exit_code = 2


class PreconditionError(BergtoepError):
    """Mathematically invalid request: wrong valuation, non-invariant data,
    non-classical symbol, caps exceeded without --unsafe."""
    exit_code = 3


class BudgetError(BergtoepError):
    """Internal truncation budgets too small for the requested order."""
    exit_code = 4


class ConditioningError(BergtoepError):
    """Numerical linear algebra failed (Gram not positive definite, etc.)."""
    exit_code = 5
