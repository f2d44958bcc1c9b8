"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`MineDetectError`, so callers (and the CLI exit-code mapping) can
separate domain failures from programming errors.
"""


class MineDetectError(Exception):
    """Base class for all package errors."""


class DimensionError(MineDetectError, ValueError):
    """Vectors or matrices with incompatible shapes."""


class InsufficientHistoryError(MineDetectError, ValueError):
    """A statistic needs more history entries than are available."""


class EmptyRosterError(MineDetectError, ValueError):
    pass


class EmptyShardError(MineDetectError, ValueError):
    pass


class EmptyDatasetError(MineDetectError, ValueError):
    pass


class InfeasiblePartitionError(MineDetectError, ValueError):
    pass


class InfeasibleError(MineDetectError, ValueError):
    """Robust aggregator preconditions (e.g. Krum's n >= f + 3) not met."""


class DefenseExhaustedError(MineDetectError, RuntimeError):
    """Every client was excluded; there is nothing left to aggregate."""


class DataFormatError(MineDetectError, ValueError):
    """Malformed input file. ``field`` names the offending header field."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ConfigError(MineDetectError, ValueError):
    """Invalid experiment configuration. ``key`` names the offending key."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
