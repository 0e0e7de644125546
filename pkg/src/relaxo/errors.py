"""Exception hierarchy shared by all relaxo modules."""


class RelaxoError(Exception):
    """Base class for relaxo errors."""


class InvalidArgument(RelaxoError, ValueError):
    """Raised for out-of-domain parameters, malformed inputs, bad shapes."""


class DomainError(InvalidArgument):
    """Raised when a quantity is mathematically undefined for the input."""


class NumericalError(RelaxoError, RuntimeError):
    """Raised when a numerical routine fails to converge or deliver."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class IntegratorInstability(NumericalError):
    """Raised when an ODE state goes non-finite or leaves its valid range."""


class OptimizationFailure(NumericalError):
    """Raised when the direct solver diverges. ``trace`` holds objective history."""

    def __init__(self, message, trace=None, diagnostics=None):
        super().__init__(message, diagnostics)
        self.trace = list(trace or [])
