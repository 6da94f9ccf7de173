"""Exception hierarchy shared by every module of the package."""


class MksgdError(Exception):
    """Base class for all errors raised by mksgd."""


class StructuralError(MksgdError, ValueError):
    """Shape mismatch or mismatched base points."""


class ConstraintError(MksgdError, ValueError):
    """A point does not satisfy its manifold constraint."""


class SingularStepError(MksgdError, ArithmeticError):
    """A retraction input is rank deficient or has a vanishing column."""


class UnsupportedMapError(MksgdError, NotImplementedError):
    """The requested map has no closed form for this manifold family."""


class NumericError(MksgdError, ArithmeticError):
    """Non-finite values appeared in a gradient, activation or loss."""


class StateError(MksgdError, RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class ConfigError(MksgdError, ValueError):
    """Invalid run configuration; ``key`` carries the offending key path."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class InputError(MksgdError, ValueError):
    """Malformed dataset file; ``position`` is a byte offset or row number."""

    def __init__(self, message, position=None):
        self.position = position
        super().__init__(f"{message} (at {position})" if position is not None else message)
