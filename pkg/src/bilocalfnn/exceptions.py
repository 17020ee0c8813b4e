class BilocalError(Exception):
    """Base class for errors raised by bilocalfnn."""


class InputError(BilocalError, ValueError):
    """An argument violates the documented preconditions."""


class SolverError(BilocalError, RuntimeError):
    """A linear program or optimizer failed to produce a usable answer."""
