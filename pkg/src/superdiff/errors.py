"""Exception types raised across the pipeline."""


class SuperDiffError(Exception):
    """Base class for all library errors."""


class DecodeError(SuperDiffError):
    """An image or mask file could not be decoded."""


class ShapeMismatch(SuperDiffError):
    """Array dimensions disagree with what the operation requires."""


class ParseError(SuperDiffError):
    """A text interchange file (feature CSV, config) is malformed."""


class ImageTooSmall(SuperDiffError):
    """Image has fewer pixels than the requested superpixel count."""


class NumericalFailure(SuperDiffError):
    """An eigensolver or linear solver did not converge."""


class SingularEigenvalue(SuperDiffError):
    """A diffusion was requested on a spectrum containing (near-)zero eigenvalues."""


class EmptySeed(SuperDiffError):
    """Seed vector is all zero."""


class DegenerateGraph(SuperDiffError):
    """Graph lacks the node structure an operation needs (e.g. no interior nodes)."""


class InsufficientData(SuperDiffError):
    """Training was requested with no samples."""


class LayoutMismatch(SuperDiffError):
    """Column banks / weight vectors built under different layouts were mixed."""


class EmptyForeground(SuperDiffError):
    """Ground truth contains no foreground nodes."""


class EmptyGroundTruth(SuperDiffError):
    """Ground-truth mask has no salient pixels (or no background pixels)."""


class FeatureMissing(SuperDiffError):
    """A feature file required by the requested configuration is absent."""
