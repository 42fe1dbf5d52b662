"""Exception hierarchy shared by all tmfm modules."""


class TmfmError(Exception):
    """Base class for all errors raised by this package."""


# ---------------------------------------------------------------------------
# dataset construction / validation


class DimensionMismatch(TmfmError):
    """Paired inputs disagree on a shared dimension (usually T)."""


class NonFiniteValue(TmfmError):
    """A NaN or infinity was found where finite data is required."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InvalidQuantile(TmfmError):
    """Quantile level outside the open interval (0, 1)."""


# ---------------------------------------------------------------------------
# lagged covariance kernels


class LagTooLarge(TmfmError):
    """Requested lag h does not leave any usable time pairs (h >= T)."""


class EmptyGrid(TmfmError):
    """A threshold search grid contains no candidate values."""


# ---------------------------------------------------------------------------
# spectral operations


class NotSymmetric(TmfmError):
    """Matrix fails the symmetry precondition of the eigensolver."""


class NoConvergence(TmfmError):
    """The eigensolver exhausted its iteration budget."""


class KOutOfRange(TmfmError):
    """Requested subspace dimension k is outside the valid range."""


class AmbientDimMismatch(TmfmError):
    """Two subspaces do not live in the same ambient dimension."""


# ---------------------------------------------------------------------------
# estimation pipeline


class EmptyRegime(TmfmError):
    """A regime partition selects too few time points to estimate from."""

    def __init__(self, message, regime=None):
        super().__init__(message)
        self.regime = regime


class ShapeMismatch(TmfmError):
    """Supplied matrices have shapes inconsistent with the data."""


class IndexOutOfRange(TmfmError):
    """A split index t0 lies outside 1..T-1."""


class EstimationStageError(TmfmError):
    """Wraps a failure inside the fitting pipeline, tagged with its stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class EmptySeries(TmfmError):
    """A summary was requested for a series with no samples."""


class DegenerateSpectrum(Warning):
    """Eigenvalues hit numerical zero inside the ratio-search range.

    Emitted as a warning: the ratio curve is truncated (treated as +inf past
    the degenerate index) and estimation continues.
    """


# ---------------------------------------------------------------------------
# simulation


class NonStationaryAR(TmfmError):
    """An autoregressive coefficient has modulus >= 1."""


class NotPositiveDefinite(TmfmError):
    """A requested covariance matrix is not positive definite."""


# ---------------------------------------------------------------------------
# file formats


class SchemaError(TmfmError):
    """A data file violates its documented schema."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DuplicateCell(SchemaError):
    """The same (t, row, col) cell appears more than once."""


class MissingCell(SchemaError):
    """A (t, row, col) combination required by the schema is absent."""
