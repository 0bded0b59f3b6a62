"""Exception hierarchy shared by every fbf-tools module."""

from typing import Any, Optional


class FbfToolsError(Exception):
    """Base class for all library errors."""


class InvalidInputError(FbfToolsError, ValueError):
    """A point is non-finite or has the wrong shape."""


class ParameterError(FbfToolsError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class DomainError(FbfToolsError, ValueError):
    """A function was evaluated outside its mathematical domain."""


class SamplingError(FbfToolsError):
    """Random sampling produced no usable data."""


class CapabilityError(FbfToolsError):
    """The requested computation is not supported by this oracle model."""


class StateError(FbfToolsError):
    """An operation was applied to a state in the wrong phase."""


class ConfigError(FbfToolsError):
    """Malformed experiment configuration."""


class CsvParseError(ConfigError):
    """A harness CSV could not be parsed."""

    def __init__(self, path: str, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line


class DivergenceError(FbfToolsError):
    """
    An iterate became non-finite or left the ball of radius 1e12.

    *state* is the last finite state; *trajectory* is filled in by the run
    loop with whatever was recorded before the blow-up.
    """

    def __init__(self, message: str, state: Any = None, trajectory: Optional[Any] = None):
        super().__init__(message)
        self.state = state
        self.trajectory = trajectory
