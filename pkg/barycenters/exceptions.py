"""
Error types raised by the solver library.

Input validation problems raise ``django.core.exceptions.ValidationError``;
the classes below cover failures that are not the caller's input being malformed.
"""


class MSBError(Exception):
    """Base class for library errors."""


class CapacityError(MSBError):
    """An instance is larger than a configured cap."""

    def __init__(self, what, size, cap):
        self.what = what
        self.size = size
        self.cap = cap
        super().__init__(f'{what} needs {size} entries, above the cap of {cap}')


class NonConvergenceError(MSBError):
    """A solve (or too many solves in an experiment) did not converge."""


class InfeasibleError(MSBError):
    """The linear program has no feasible point."""


class CheckFailedError(MSBError):
    """An experiment finished but one of its asserted checks does not hold."""

    def __init__(self, what, checks):
        self.what = what
        self.checks = list(checks)
        super().__init__(f'{what} failed: {", ".join(self.checks)}')
