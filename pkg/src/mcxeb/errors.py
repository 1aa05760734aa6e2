"""Exception types shared across the package."""


class McxebError(Exception):
    """Base class for all package errors."""


class GateTargetError(McxebError, IndexError):
    """Gate target qubit out of range or not an adjacent pair."""


class NotNormalizedError(McxebError):
    """Operation requires a unit-norm state."""


class DegenerateBranchError(McxebError):
    """Renormalized projection onto a zero-probability branch."""


class RecordLengthError(McxebError):
    """Measurement record length does not match the descriptor."""


class FormatError(McxebError):
    """Malformed, version-mismatched, or hash-mismatched serialized data."""


class EnumerationInfeasibleError(McxebError):
    """Exact enumeration over 2^N records is out of budget."""


class DegenerateEstimateError(McxebError):
    """Histogram denominator is zero; the estimate is undefined."""


class TrainingDivergenceError(McxebError):
    """Non-finite loss or hidden state during training."""


class ConfigError(McxebError):
    """Invalid experiment configuration."""
