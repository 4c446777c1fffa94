"""Exception hierarchy shared by all ringflow modules."""


class RingflowError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(RingflowError, ValueError):
    """Malformed input data.

    Carries the offending ``field`` name and a short ``reason`` so callers
    can report the problem without parsing the message.
    """

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class ContainmentError(RingflowError, ValueError):
    """The inner region is not contained in the outer region."""


class DegenerateGapError(ContainmentError):
    """The inner region touches the outer boundary."""


class ResolutionError(RingflowError, ValueError):
    """The requested mesh size cannot resolve the geometry."""


class DomainError(RingflowError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class SingularityError(DomainError):
    """Evaluation at a point where the quantity is unbounded."""


class ConvergenceError(RingflowError, RuntimeError):
    """Nonlinear iteration failed to reach the requested tolerance."""

    def __init__(self, message, history=()):
        self.history = list(history)
        super().__init__(message)


class TracingIncompleteError(RingflowError, RuntimeError):
    """A streamline stopped before reaching the inner boundary."""


class IntegrityError(RingflowError, RuntimeError):
    """Computed data violates a structural guarantee (e.g. crossing streamlines)."""


class ConfigError(RingflowError, ValueError):
    """Invalid run configuration."""
