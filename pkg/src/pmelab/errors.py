"""Exception types shared across the package."""


class PmelabError(Exception):
    """Base class for every package-specific error."""


class DomainError(PmelabError, ValueError):
    """An argument lies outside the operation's domain."""


class ConfigurationError(PmelabError, ValueError):
    """A configuration value, or a combination of values, is invalid."""


class SolverError(PmelabError, RuntimeError):
    """A numerical solve failed (Newton stall, lost pivot, non-finite state)."""


class DomainTooSmallError(SolverError):
    """Probability mass reached the edge of the computational box."""
