"""Exception hierarchy. The CLI maps these onto exit codes."""


class SmoothConvexError(Exception):
    """Base class for library errors."""


class PreconditionError(SmoothConvexError):
    """Invalid arguments or violated input invariants (CLI exit code 2)."""


class DomainError(PreconditionError):
    """Query point / level outside the object's domain."""


class ConstructionError(SmoothConvexError):
    """A constructive procedure failed to produce a valid object (exit 3)."""


class NumericError(SmoothConvexError):
    """An iterative solver failed to converge (exit 4)."""
