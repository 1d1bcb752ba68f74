"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes, so library code should raise
the most specific type that applies.
"""


class AECompressError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(AECompressError):
    """Invalid configuration: bad shapes chains, out-of-range knobs, unknown keys."""


class DataError(AECompressError):
    """Malformed input data: ragged CSV rows, non-numeric cells, short series."""


class TrainingError(AECompressError):
    """Numerical failure during training: non-finite loss or gradients."""


class FormatError(DataError):
    """Corrupt or inconsistent model file payload."""
