"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes (see cli.py): ConfigError -> 2,
DataError -> 3, NumericError -> 4.
"""


class SalforgeError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SalforgeError):
    """Invalid configuration."""


class ParseError(ConfigError):
    """Config file failed to parse or failed schema validation."""


class UnknownKey(ParseError):
    """Config contains a key the schema does not define."""


class ConfigInvalid(ConfigError):
    """Structurally valid config with out-of-range or inconsistent values."""


class DataError(SalforgeError):
    """Invalid data payload."""


class DimensionMismatch(DataError):
    """Maps or images that must share dimensions do not."""


class NoCorrectAnnotations(DataError):
    """Every annotator correctness flag in an annotation set is false."""


class NotBinary(DataError):
    """Operation requires a map with values in {0, 255} only."""


class EmptySaliency(DataError):
    """Map has no salient pixel where at least one is required."""


class OutOfBounds(DataError):
    """Rectangle does not fit inside the target image."""


class ShapeMismatch(DataError):
    """Tensor, parameter, or label shapes disagree."""


class EmptyDataset(DataError):
    """Training requires at least one sample."""


class DegenerateLabels(DataError):
    """Scored set lacks a positive or a negative example."""


class PgmError(DataError):
    """Base class for PGM serialization failures."""


class MalformedHeader(PgmError):
    """PGM header is not a P5/width/height/maxval sequence."""


class TruncatedPayload(PgmError):
    """PGM payload is shorter than width * height bytes."""


class UnsupportedMaxval(PgmError):
    """PGM maxval is not 255."""


class ManifestError(DataError):
    """Manifest rows reference missing or invalid files."""


class CheckpointError(DataError):
    """Checkpoint file is malformed."""


class NumericError(SalforgeError):
    """Non-finite loss encountered during training."""
