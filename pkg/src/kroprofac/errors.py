"""Exception types shared across the package.

The CLI maps these onto exit codes: shape/argument problems exit 2,
numeric failures exit 3, configuration problems exit 4.
"""


class DimensionError(ValueError):
    """Matrix shape is incompatible with the declared dimensions."""


class SingularDesignError(RuntimeError):
    """The Gram matrix X'X is numerically singular."""

    def __init__(self, message, rcond=None):
        super().__init__(message)
        self.rcond = rcond


class NumericError(RuntimeError):
    """An iterative numerical kernel failed (non-convergence, loss of
    positive definiteness, or non-monotone ascent)."""


class ConfigError(ValueError):
    """Bad value or unknown key in an experiment configuration."""
