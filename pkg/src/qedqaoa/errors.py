"""Exception types raised across the package."""


class QedQaoaError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(QedQaoaError, ValueError):
    pass


class PreconditionViolation(QedQaoaError, ValueError):
    pass


class NoPathError(QedQaoaError):
    pass


class ResourceCapError(QedQaoaError, MemoryError):
    """A basis or enumeration would exceed the configured size cap."""


class NotInBasisError(QedQaoaError, KeyError):
    pass


class InvalidBasisError(QedQaoaError, TypeError):
    pass


class InvalidCombinationError(QedQaoaError):
    """Operator/basis pairing that cannot be represented (e.g. closure fails)."""


class BasisMismatchError(QedQaoaError, ValueError):
    pass


class NumericalError(QedQaoaError, ArithmeticError):
    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class InfeasibilityError(QedQaoaError, ValueError):
    pass


class FlowRangeError(QedQaoaError, ValueError):
    pass


class ConfigValidationError(QedQaoaError, ValueError):
    pass
