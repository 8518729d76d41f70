"""Exception hierarchy shared across the package."""


class PeekPassError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PeekPassError, ValueError):
    """Arguments violate an operation's preconditions."""


class InvalidGridError(InvalidInputError):
    """Grid geometry is malformed (e.g. non-positive resolution)."""


class InvalidPoseError(InvalidInputError):
    """A pose lies somewhere it is not allowed to (e.g. inside a wall)."""


class ConfigError(PeekPassError, ValueError):
    """Configuration is invalid or references an unknown key."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
