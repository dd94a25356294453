"""Exception hierarchy shared by all modules."""


class ResetRidgeError(Exception):
    """Base class for library errors."""


class InputError(ResetRidgeError, ValueError):
    """Malformed input data (non-finite entries, shape mismatch)."""


class ParameterError(ResetRidgeError, ValueError):
    """A scalar or grid parameter is outside its admissible range."""


class DomainError(ResetRidgeError, ValueError):
    """A quantity is undefined at the requested point."""


class NumericalError(ResetRidgeError, ArithmeticError):
    """A numerical routine failed to converge or produced an invalid result."""


class ConfigError(ResetRidgeError, ValueError):
    """Invalid experiment or CLI configuration.

    ``key`` names the offending configuration entry when known.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
