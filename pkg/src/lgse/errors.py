"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors are 1, I/O problems 2,
validation failures 3, capacity shortfalls 4.
"""


class LgseError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(LgseError, ValueError):
    """Input violates a documented precondition or invariant."""


class ParseError(ValidationError):
    """A text input file is malformed. Messages carry a line number."""


class CapacityError(LgseError):
    """The corpus cannot supply enough units to reach the requested size."""


class UsageError(LgseError):
    """Command line invoked incorrectly."""
