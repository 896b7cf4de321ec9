"""Exception and warning classes shared across the package."""


class InvalidInputError(ValueError):
    """Input array has the wrong shape or non-finite entries."""


class DimensionMismatchError(ValueError):
    """Two operands live in different dimensions or have different counts."""


class IncompleteGraphError(ValueError):
    """A pairwise measurement is missing; the complete graph is required."""


class DegenerateGeometryError(ValueError):
    """Point configuration does not determine a unique rigid motion."""


class DiagnosticsUnavailableError(ValueError):
    """Observations cannot be traced back to a ground truth and noise model."""


class PlyFormatError(ValueError):
    """Malformed or unsupported PLY file."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class DegenerateProjectionWarning(RuntimeWarning):
    """Nearest rotation is not unique (tied smallest singular values with a reflection)."""


class DegenerateSpectrumWarning(RuntimeWarning):
    """No usable gap between the d-th and (d+1)-th smallest eigenvalues."""
