"""Exception taxonomy shared across the package.

The CLI maps these onto fixed exit codes (see cli.py): config/spec problems
exit 2, IO problems exit 3, shape/weight mismatches exit 4, empty evaluation
strata exit 5.
"""


class TrackerError(Exception):
    """Base class for all package errors."""


class ConfigError(TrackerError):
    """Invalid configuration, flags, or scene specification."""


class DegenerateSpec(ConfigError):
    """Scene specification that cannot be rendered (e.g. body behind camera)."""


class IoError(TrackerError):
    """Filesystem-level failure while reading or writing artifacts."""


class CorruptManifest(IoError):
    """Container manifest disagrees with its payload."""


class ShapeMismatch(TrackerError):
    """Tensor shape incompatible with the declared contract."""


class MissingWeight(TrackerError):
    """A named weight tensor required by the model is absent."""


class NonPositiveDepth(TrackerError):
    """Depth (z) must be strictly positive for projection."""


class NonPositiveDisparity(TrackerError):
    """Stereo disparity must be strictly positive to yield a depth."""


class NonPositivePrediction(TrackerError):
    """Predicted trajectory depth must be strictly positive."""


class OddChannelCount(TrackerError):
    """1D sinusoidal encodings need an even channel count."""


class BadChannelCount(TrackerError):
    """2D sinusoidal encodings need a channel count divisible by 4."""


class VideoTooShort(TrackerError):
    """Video has fewer frames than one window."""


class MissingPrevious(TrackerError):
    """Window initialization needs the previous window's result."""


class FrameOutOfRange(TrackerError):
    """Frame index outside the available range."""


class UnknownBox(TrackerError):
    """No pose log entry for the requested box id."""


class EmptySparseSet(TrackerError):
    """Depth densification needs at least one sparse point."""


class EmptyList(TrackerError):
    """Aggregation over an empty collection."""


class NoValidPoints(TrackerError):
    """Every entry was masked out; metrics are undefined."""


class KinkProximity(TrackerError):
    """Finite-difference probe too close to an L1 kink."""
