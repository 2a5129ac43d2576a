"""Error taxonomy shared across the package.

Each class maps to one CLI exit code (see cli.EXIT_CODES): structural file
problems, impossible crop geometry, invalid data values, and degenerate
model-fitting inputs are distinct failure modes.
"""


class NestedMetasegError(Exception):
    """Base class for all package errors."""


class FormatError(NestedMetasegError):
    """A file is structurally malformed (bad magic, dtype, order flag, ...).

    ``category`` names the specific structural defect so callers and tests
    can distinguish rejection reasons.
    """

    def __init__(self, message: str, category: str = "format"):
        super().__init__(message)
        self.category = category


class GeometryError(NestedMetasegError):
    """Crop geometry is impossible for the given frame (empty crop or band)."""


class ValidationError(NestedMetasegError):
    """Data values violate an invariant (simplex sums, label ranges, shapes)."""


class DegenerateError(NestedMetasegError):
    """Model fitting input is degenerate (e.g. a single-class training set)."""
