"""Exception types shared across the package."""


class AggDiffError(Exception):
    """Base class for package errors."""


class ConfigError(AggDiffError):
    """Malformed experiment configuration."""


class ConvergenceError(AggDiffError):
    """An iterative solve failed to converge; carries a residual report."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class GuardShellError(AggDiffError):
    """Support reached the Cartesian guard shell: the domain, not the physics, failed."""
