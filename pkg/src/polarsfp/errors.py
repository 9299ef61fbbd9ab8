"""Exception types shared across the toolkit."""


class PolarSfpError(Exception):
    """Base class for all toolkit errors."""


class DomainError(PolarSfpError):
    """An argument is outside its mathematical domain."""


class DimensionMismatch(PolarSfpError):
    """Arrays that must share a shape do not."""


class DegenerateFit(PolarSfpError):
    """The sinusoid design matrix is rank-deficient (angles collinear mod pi)."""


class EmptyMask(PolarSfpError):
    """An operation that averages over foreground pixels received none."""


class ShapeMismatch(PolarSfpError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigError(PolarSfpError):
    """A network or run configuration violates its invariants."""


class DataError(PolarSfpError):
    """A training patch or sample is malformed."""


class IoError(PolarSfpError):
    """A filesystem-level failure while reading or writing a dataset."""


class BadMagic(IoError):
    """A raster file does not start with the expected magic bytes."""


class HeaderParse(IoError):
    """A raster header line could not be parsed."""


class TruncatedPayload(IoError):
    """A raster payload is shorter than its header promises."""


class MissingFile(IoError):
    """A required file is absent from a sample directory."""


class NonUnitNormals(DataError):
    """A normals raster contains foreground vectors far from unit length."""


class SideTooLarge(DataError):
    """The requested patch side exceeds the sample size."""


class UnassignedObject(DataError):
    """A sample's object id appears in no split set."""


class OverlappingSets(DataError):
    """Train and test object sets intersect."""
