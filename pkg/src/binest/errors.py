"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class DegeneratePilotError(ArithmeticError):
    """A pilot sample carries no information about N (all binomial counts zero)."""


class ToleranceError(ArithmeticError):
    """A numerical routine failed to reach its stated tolerance."""


class RunawayStoppingError(RuntimeError):
    """The sequential stopping rule did not fire before the safety cap."""


class ReplicationError(RuntimeError):
    """Too many replicas of a simulation aborted."""
