"""Exception types raised across the package.

Each is a distinct class so callers (and the CLI) can map failures to
exit codes without string matching.
"""


class XmdaError(Exception):
    """Base class for all package errors."""


class EmptyFov(XmdaError):
    """No point survives field-of-view filtering (degenerate frame)."""


class InvalidResolution(XmdaError):
    """Voxel resolution must be strictly positive."""


class OutOfBounds(XmdaError):
    """A pixel coordinate falls outside the feature map."""


class UnknownPreset(XmdaError):
    """Scenario preset name not found."""


class UnmappedLabel(XmdaError):
    """A raw label is absent from the class-mapping table."""


class ShapeMismatch(XmdaError):
    """Array shapes disagree between the 2D and 3D paths."""


class AllIgnored(XmdaError):
    """Every label in the batch is the ignore index."""


class EmptySplit(XmdaError):
    """Operation requires a non-empty split."""


class StaleCheckpoint(XmdaError):
    """Pseudo-labels may only be extracted from a final checkpoint."""


class ConfigSplitMismatch(XmdaError):
    """Training config requires splits the dataset does not provide."""


class NonFiniteLoss(XmdaError):
    """Training aborted because a loss became NaN or infinite."""

    def __init__(self, message, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path


class LengthMismatch(XmdaError):
    """Prediction and truth arrays have different lengths."""


class EmptyMatrix(XmdaError):
    """Confusion matrix holds no evaluated points."""


class MissingReport(XmdaError):
    """A named metrics report required for a delta is absent."""


class IoFailure(XmdaError):
    """Filesystem operation failed."""
