"""Exception and warning types shared across the package."""


class VntppError(Exception):
    """Base class for all package errors."""


class ParseError(VntppError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(VntppError):
    pass


class DegenerateSplit(VntppError):
    pass


class TimeOrderError(VntppError):
    pass


class ExplosionGuard(VntppError):
    """Raised when a simulation exceeds its event cap (likely unstable spec)."""


class UnsupportedKernel(VntppError):
    pass


class UnsupportedDataset(VntppError):
    pass


class ShapeError(VntppError, ValueError):
    pass


class NonFiniteError(VntppError, FloatingPointError):
    pass


class NotScalar(VntppError, ValueError):
    pass


class StabilityWarning(UserWarning):
    pass


class LowMassWarning(UserWarning):
    pass
