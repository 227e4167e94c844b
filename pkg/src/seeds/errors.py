"""Exception types raised across the package.

Plain argument problems raise :class:`ValueError`; the classes below cover
the failure modes callers may want to catch specifically.
"""


class InsufficientDataError(ValueError):
    """Input data does not cover what the computation needs."""


class UndefinedCorrelationError(ValueError):
    """A correlation was requested for a field with zero spatial variance."""


class NumericalDivergenceError(FloatingPointError):
    """An iterative integration produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ContainerFormatError(ValueError):
    """A tensor container has a bad magic number, version, or header."""


class ContainerCorruptError(ValueError):
    """A tensor container is truncated or its sizes are inconsistent."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset
