"""Exception types shared across the package."""


class LineswarmError(Exception):
    """Base class for all package errors."""


class ValidationError(LineswarmError, ValueError):
    """Inputs violate a documented precondition (domain, ordering, range)."""


class DegenerateConfigurationError(ValidationError):
    """A configuration is degenerate for the requested operation.

    Raised e.g. when fractional parts of positions collide and an
    operation requires them distinct, or when a hull vertex repeats.
    """


class InvariantViolationError(LineswarmError, RuntimeError):
    """A runtime invariant of the dynamics was violated.

    These checks guard theorems the engine relies on (gathered clusters
    never spread again, pre-gathering monotonicity of the core edges).
    A violation indicates a bug, never a legitimate simulation outcome.
    """
