"""Exception types shared across the package."""


class StructureError(ValueError):
    """Raised when two model structures are incompatible (e.g. a change of
    basis is requested between spaces that are not nested)."""


class NumericalError(RuntimeError):
    """Raised when a linear-algebra or optimization step fails beyond repair
    (factorization failure after jitter escalation, QP non-convergence...)."""
