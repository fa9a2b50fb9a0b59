"""Exception hierarchy for the toolkit.

Everything raised on purpose derives from IllumeError so callers (and the
CLI) can separate our failures from genuine bugs. The CLI maps these to
exit codes: usage 1, data errors 2, numeric divergence 3.
"""


class IllumeError(Exception):
    """Base class for all toolkit errors."""


class InvalidIlluminantError(IllumeError, ValueError):
    """Illuminant vector is not a usable light direction (zero, negative, non-finite)."""


class DegenerateDivisionError(IllumeError, ValueError):
    """Von Kries correction asked to divide by a zero channel."""


class ManifestError(IllumeError, ValueError):
    """Dataset manifest is malformed or violates an invariant."""


class ImageFormatError(IllumeError, ValueError):
    """Image file cannot be decoded into linear RGB."""


class FoldingError(IllumeError, ValueError):
    """Cross-validation fold plan cannot be built as requested."""


class ClusteringError(IllumeError, ValueError):
    """K-means request is infeasible for the given illuminants."""


class InfeasibleCropError(IllumeError, ValueError):
    """No valid crop position exists under the patch spec and mask policy."""


class DegenerateEstimateError(IllumeError, ValueError):
    """A statistics-based estimator produced an all-zero or undefined channel."""


class ShapeMismatchError(IllumeError, ValueError):
    """Tensor shape does not match the network specification."""


class DivergenceError(IllumeError, ArithmeticError):
    """Training loss became non-finite."""


class UsageError(IllumeError, ValueError):
    """Bad command line or configuration input."""
