"""Exception types shared across the package."""


class CosemError(Exception):
    """Base class for all package-specific errors."""


class ParseError(CosemError):
    """Raised when too many input lines fail to parse.

    Attributes:
        line_no: 1-based number of the first malformed line.
        malformed: total count of malformed lines.
    """

    def __init__(self, message: str, line_no: int, malformed: int = 1):
        super().__init__(message)
        self.line_no = line_no
        self.malformed = malformed


class EmptyCorpusError(CosemError):
    """No usable events remain after ingestion or filtering."""


class EmptyTrainSetError(CosemError):
    """A training run was requested on an empty train split."""


class ShapeMismatchError(CosemError, ValueError):
    """Operands passed to a linear-algebra kernel have incompatible shapes."""


class DivergenceError(CosemError):
    """Training loss became non-finite."""


class CheckpointError(CosemError):
    """Base class for checkpoint and bundle (de)serialization failures."""


class VersionMismatchError(CheckpointError):
    """Stored format version is newer than this code supports."""


class CorruptCheckpointError(CheckpointError):
    """Checkpoint bytes fail structural or checksum validation."""


class AllInstancesSkippedError(CosemError):
    """Every evaluation instance was skipped, leaving nothing to score."""


class UsageError(CosemError):
    """Invalid command-line argument values."""
