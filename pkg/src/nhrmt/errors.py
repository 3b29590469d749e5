"""Exception types shared across the package."""

import numpy as np


class ProfileError(ValueError):
    """Raised for inadmissible variance profiles (negative, reducible, zero)."""


class ConvergenceError(RuntimeError):
    """An iterative routine did not reach its tolerance within budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularityError(np.linalg.LinAlgError):
    """A linear system is singular or too ill-conditioned to trust."""

    def __init__(self, message, cond=None):
        super().__init__(message)
        self.cond = cond


class ContourError(ValueError):
    """Spectrum of a sampled matrix is not enclosed by the integration contour."""


class HorizonError(ValueError):
    """Requested time lies beyond the safe evaluation horizon."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""
