"""Exception hierarchy for the sparseflow package.

Errors are grouped so the CLI can map them onto its exit-code contract:
usage problems exit 1, I/O and file-format problems exit 2, numeric or
validation problems exit 3.
"""


class SparseFlowError(Exception):
    """Base class for all errors raised by this package."""


# --- I/O and file-format errors (CLI exit code 2) ---------------------------


class IoError(SparseFlowError):
    """Base for filesystem and file-format failures."""


class BadMagicError(IoError):
    """File does not start with the expected magic bytes."""


class TruncatedError(IoError):
    """File ends before the length implied by its header."""


class IoFailureError(IoError):
    """Underlying read/write operation failed."""


class MissingFlowFileError(IoError):
    """A manifest references a flow file that does not exist."""


# --- numeric / validation errors (CLI exit code 3) ---------------------------


class ValidationError(SparseFlowError):
    """Base for bad values and incompatible operands."""


class NonFiniteValueError(ValidationError):
    """Data contains NaN/inf or a sentinel magnitude above 1e9."""


class DimensionMismatchError(ValidationError):
    """Operands do not share the grid dimensions the operation requires."""


class KOutOfRangeError(ValidationError):
    """Requested top-k count is outside [1, H*W]."""


class EmptySelectionError(ValidationError):
    """A sparse operation received an empty point set."""


class EvenRadiusError(ValidationError):
    """Merge neighborhood side R must be odd."""


class FusionOutOfRangeError(ValidationError):
    """Fusion map values must lie in [0, 1]."""


class EmptyFlowError(ValidationError):
    """An operation that needs flow samples received none."""
