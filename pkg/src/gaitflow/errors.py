"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class GaitflowError(Exception):
    """Base class for all library errors."""


class ConfigError(GaitflowError):
    """Invalid or inconsistent configuration."""


class DataError(GaitflowError):
    """Invalid input data: bad shapes, missing joints, empty masks, ..."""


class DimensionError(DataError):
    """Tensor shape mismatch; the message names the offending axes."""


class NumericError(GaitflowError):
    """Numeric failure: non-finite loss, degenerate descriptor, ..."""


class DegenerateDescriptorError(NumericError):
    """A descriptor with (near-)zero norm cannot be L2-normalized."""
