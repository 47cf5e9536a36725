"""Exception types shared across the package."""


class DistLearnError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DistLearnError, ValueError):
    """A distribution, rule or manifest is malformed."""


class UsageError(DistLearnError, ValueError):
    """An operation was called with an incompatible model or label space."""


class ProtocolError(DistLearnError, ValueError):
    """A fusion rule received a response it cannot accept (e.g. an abstention)."""


class InfeasibleInstanceError(ConfigurationError):
    """A counterexample instance has no valid auxiliary distribution."""


class ParseError(DistLearnError, ValueError):
    """A results CSV does not follow the expected schema."""
