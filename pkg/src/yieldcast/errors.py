"""Exception hierarchy.

Every error carries the name of the module that raised it so the CLI can
prefix messages, and an exit code used by ``yieldcast`` subcommands.
"""

from __future__ import annotations


class YieldcastError(Exception):
    exit_code = 1
    module = "yieldcast"

    def __init__(self, message: str, *, module: str | None = None):
        super().__init__(message)
        if module is not None:
            self.module = module

    def __str__(self) -> str:
        return f"{self.module}: {super().__str__()}"


class ConfigError(YieldcastError, ValueError):
    """Invalid configuration or arguments (CLI exit code 2)."""

    exit_code = 2


class DataError(YieldcastError, ValueError):
    """Bad input data (CLI exit code 3).

    ``file``, ``row`` and ``value`` locate the offending record when known.
    """

    exit_code = 3

    def __init__(
        self,
        message: str,
        *,
        file=None,
        row: int | None = None,
        value=None,
        module: str | None = None,
    ):
        self.file = None if file is None else str(file)
        self.row = row
        self.value = value
        where = []
        if self.file is not None:
            where.append(self.file)
        if row is not None:
            where.append(f"row {row}")
        if value is not None:
            where.append(f"value {value!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message, module=module)


class ParseError(DataError):
    pass


class SchemaError(DataError):
    pass


class RangeError(DataError):
    pass


class GapError(DataError):
    pass


class DuplicateError(DataError):
    pass


class ConsistencyError(DataError):
    pass


class CoverageError(DataError):
    pass


class PlanError(DataError):
    pass


class CombinationError(DataError):
    pass


class JoinError(DataError):
    pass


class ShapeError(YieldcastError, ValueError):
    exit_code = 3


class DomainError(YieldcastError, ValueError):
    exit_code = 3


class NumericError(YieldcastError, FloatingPointError):
    """Non-finite values in a numerical routine (CLI exit code 4)."""

    exit_code = 4


class CheckpointError(YieldcastError):
    exit_code = 3
    module = "persist"


class MagicError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class TruncationError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass
