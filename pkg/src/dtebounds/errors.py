"""Exception types shared across the package."""


class DteBoundsError(Exception):
    """Base class for all package-specific errors."""


class DataError(DteBoundsError, ValueError):
    """Malformed input data: bad CSV rows, invalid domains, schema problems."""


class ValidationError(DteBoundsError, ValueError):
    """Invalid configuration or arguments (CLI exit code 2)."""


class OverlapError(DteBoundsError, RuntimeError):
    """A covariate cell lacks records for some (treatment, sample) pair (exit code 3)."""


class InfeasibleModelError(DteBoundsError, RuntimeError):
    """The constrained joint-distribution polytope is empty given the data (exit code 4)."""


class SolverError(DteBoundsError, RuntimeError):
    """The embedded linear-program solver failed to certify a solution."""
