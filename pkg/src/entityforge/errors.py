"""Error types shared across the package.

Every data-level failure carries a short category string so the CLI can
report `error[<category>]: message` and exit with a stable code.
"""


class EntityForgeError(Exception):
    """Base class for all errors raised by this package."""

    category = "error"

    def __init__(self, message: str, category: str | None = None):
        super().__init__(message)
        if category is not None:
            self.category = category


class DataError(EntityForgeError):
    """Bad input data (malformed stream, unsorted blocks, bad CSV...)."""

    category = "data"


class IngestError(DataError):
    """A transaction in the input stream violates the format contract."""

    category = "ingest"


class ValidationError(DataError):
    """A transaction violates a value invariant (inflation, negatives...)."""

    category = "validation"


class ModeError(DataError):
    """An operation was called on an index in the wrong horizon mode."""

    category = "mode"


class ConfigError(EntityForgeError):
    """Invalid run configuration (bad parameters, unknown heuristic...)."""

    category = "config"


class GenerationError(EntityForgeError):
    """Synthetic stream generation was asked for something infeasible."""

    category = "generation"
