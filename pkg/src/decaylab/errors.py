"""Exception hierarchy.

Configuration/usage problems map to CLI exit code 2, numerical failures to 3.
"""


class DecayLabError(Exception):
    pass


class DomainError(DecayLabError, ValueError):
    """Argument outside the mathematical domain (negative time, x <= 0 for psi...)."""


class UsageError(DecayLabError, ValueError):
    """Caller violated a precondition (empty grid, t < T, regime mismatch...)."""


class ConfigError(DecayLabError, ValueError):
    """Invalid experiment / system configuration."""


class InvalidProfileError(ConfigError):
    pass


class InsufficientDataError(DecayLabError, ValueError):
    pass


class UnsupportedClosedFormError(DecayLabError):
    pass


class NumericalError(DecayLabError, ArithmeticError):
    pass


class StiffnessError(NumericalError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class StepFailure(NumericalError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class SolverError(NumericalError):
    pass
