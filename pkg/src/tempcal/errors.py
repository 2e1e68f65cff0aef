"""Exception types shared across the toolkit."""


class TempcalError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatch(TempcalError, ValueError):
    """Operands have incompatible shapes."""


class NonScalarLoss(TempcalError, ValueError):
    """Backward was started from a tensor that is not a scalar."""


class NonPositiveScale(TempcalError, ValueError):
    """A per-sample scale must be strictly positive."""


class NonPositiveTemperature(TempcalError, ValueError):
    """A global temperature must be strictly positive."""


class DegenerateProb(TempcalError, ValueError):
    """A probability required by a loss underflowed to (effectively) zero."""


class EmptyBatch(TempcalError, ValueError):
    """A metric was asked to summarize zero samples."""


class MissingProbs(TempcalError, ValueError):
    """A per-class metric needs full probability vectors, which are absent."""


class DegenerateLabels(TempcalError, ValueError):
    """Ranking metrics need at least one correct and one incorrect sample."""


class ZeroVariance(TempcalError, ValueError):
    """Correlation is undefined when one of the inputs is constant."""


class BadMagic(TempcalError, ValueError):
    """An IDX file starts with the wrong magic number."""


class CountMismatch(TempcalError, ValueError):
    """Image and label files describe different sample counts."""


class TruncatedFile(TempcalError, ValueError):
    """A binary file ended before its header said it would."""


class TooSmall(TempcalError, ValueError):
    """A dataset is too small for the requested split."""


class ZeroStd(TempcalError, ValueError):
    """Normalization was given a zero standard deviation."""


class ManifestMismatch(TempcalError, ValueError):
    """A checkpoint manifest disagrees with itself or with the blob."""


class BlobSizeMismatch(TempcalError, ValueError):
    """A checkpoint blob holds a different number of values than declared."""


class ConfigError(TempcalError, ValueError):
    """A run configuration is malformed or inconsistent."""


class DataError(TempcalError, ValueError):
    """A dataset could not be loaded or constructed."""


class NumericError(TempcalError, ArithmeticError):
    """Training or evaluation produced a non-finite value."""
