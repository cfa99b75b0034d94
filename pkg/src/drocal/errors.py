"""Exception hierarchy shared by every module.

The CLI maps each family onto a distinct exit code.
"""


class DrocalError(Exception):
    """Base class for all toolkit errors."""


class DomainError(DrocalError, ValueError):
    """Invalid input: out-of-box points, bad shapes, NaNs, bad config."""


class SpecError(DomainError):
    """A summary specification cannot be applied (e.g. an empty band)."""


class EmptySetError(DomainError):
    """An operation needs at least one eligible point and got none."""


class SolverError(DrocalError, RuntimeError):
    """The LP solver failed to return an optimal solution."""


class InfeasibleError(SolverError):
    """The weight polytope is empty at the requested threshold."""


class ProtocolError(DrocalError):
    """An external simulator sent a malformed or error response."""


class TransportError(ProtocolError):
    """The simulator process exited or stopped answering."""
