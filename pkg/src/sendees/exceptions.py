"""Exception hierarchy shared by the numerical kernels, pipelines and CLI."""


class SendeesError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SendeesError, ValueError):
    pass


class NonFiniteError(SendeesError, ValueError):
    pass


class InsufficientSamplesError(SendeesError, ValueError):
    pass


class SymmetryError(SendeesError, ValueError):
    pass


class DegenerateSpectrumError(SendeesError, ArithmeticError):
    pass


class ConvergenceError(SendeesError, ArithmeticError):
    """Iterative routine hit its iteration cap.

    ``last_value`` carries the final iterate so callers can decide whether
    it is usable anyway.
    """

    def __init__(self, message, last_value=None):
        super().__init__(message)
        self.last_value = last_value


class ScoringError(SendeesError, RuntimeError):
    pass


class DivergenceError(SendeesError, ArithmeticError):
    pass


class SnapshotError(SendeesError, ValueError):
    """Malformed EMB1 snapshot file."""


class SnapshotMagicError(SnapshotError):
    pass


class SnapshotVersionError(SnapshotError):
    pass


class SnapshotTruncatedError(SnapshotError):
    pass


class ManifestError(SendeesError, ValueError):
    pass


class ConfigError(SendeesError, ValueError):
    pass
