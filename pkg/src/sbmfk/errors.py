"""Exception hierarchy shared by all modules."""


class SbmfkError(Exception):
    """Base class for every error raised by the package."""


class DomainError(SbmfkError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ArgumentError(SbmfkError, ValueError):
    """Malformed or inconsistent arguments."""


class NumericError(SbmfkError, ArithmeticError):
    """A quadrature or iteration did not reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")
        self.residual = residual


class UnsupportedError(SbmfkError, NotImplementedError):
    """The requested operation is not available for this input class."""


class SamplerError(SbmfkError, RuntimeError):
    """A random sampler exceeded its iteration budget."""


class ResourceError(SbmfkError, RuntimeError):
    """A computation would exceed its declared resource budget."""


class SingularError(SbmfkError, ArithmeticError):
    """A linear solve was requested at (or too close to) a spectral point."""


class SchemaError(SbmfkError, ValueError):
    """A configuration violates the strict schema."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message
