"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: configuration problems exit 1, data
problems exit 2, numerical failures exit 3.
"""


class CountCPError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CountCPError):
    """Invalid configuration: unknown keys, bad values, impossible requests."""


class SpecValidationError(ConfigError):
    """An experiment specification that cannot describe a valid experiment."""


class DataError(CountCPError):
    """Base class for problems with input data or data files."""


class IngestionError(DataError):
    """A record or file could not be turned into tensor entries."""


class EmptyTensorError(DataError):
    """Filtering or construction left no entries at all."""


class UndefinedStatisticError(DataError):
    """A statistic was requested on too little data (e.g. VMR of one count)."""


class LabelMismatchError(DataError):
    """An operation required modes to share a label set and they do not."""


class SplitError(DataError):
    """A train/test split request that leaves one side empty."""


class EmptyRegionError(DataError):
    """A cell region that should contain observations is empty."""


class NumericalError(CountCPError):
    """Base class for numerical failures during fitting."""


class NumericalDegeneracyError(NumericalError):
    """An update hit a degenerate denominator or non-finite intermediate."""


class InadmissibleZeroError(NumericalError):
    """A multiplicative update found a zero reconstruction under a positive count."""


class DegenerateUpdateError(NumericalError):
    """A multiplicative update denominator collapsed to zero."""
