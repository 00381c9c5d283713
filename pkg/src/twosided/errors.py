"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ConvergenceError(RuntimeError):
    """An iterative method hit its iteration or depth cap."""


class QuadratureError(ConvergenceError):
    """Adaptive quadrature exhausted its subdivision depth."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class SchemaError(ValueError):
    """A JSON document does not match its schema.

    ``path`` locates the offending element, e.g. ``"ccs/0/eps"``.
    """

    def __init__(self, message, path=""):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path
