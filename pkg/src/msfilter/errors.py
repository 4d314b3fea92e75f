"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid user configuration (CLI exit code 2)."""


class NumericalError(ArithmeticError):
    """Non-finite values from simulation, quadrature or likelihood accumulation (CLI exit code 3)."""

    def __init__(self, message, trial_index=None):
        super().__init__(message)
        self.trial_index = trial_index
