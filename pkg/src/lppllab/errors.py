"""Exception hierarchy shared by all modules."""


class LpplError(Exception):
    """Base class for all package errors."""


class ValidationError(LpplError):
    """Invalid inputs, geometry, or configuration."""


class SolverError(LpplError):
    """Eigensolver failure (non-convergence, unusable spectrum window)."""

    def __init__(self, message, best_energy=None, best_residual=None):
        super().__init__(message)
        self.best_energy = best_energy
        self.best_residual = best_residual
