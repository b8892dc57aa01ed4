"""Exception hierarchy shared by all modules."""


class LatentModelError(Exception):
    """Base class for every error raised by this package."""


class ModelValidationError(LatentModelError, ValueError):
    pass


class DuplicateSingletonBlock(ModelValidationError):
    pass


class DuplicateRho(ModelValidationError):
    pass


class MixedDomain(ModelValidationError):
    pass


class HeterogeneousSpatial(ModelValidationError):
    pass


class ParamOutOfRange(ModelValidationError):
    pass


class ModelParseError(ModelValidationError):
    pass


class NonstationaryBlock(LatentModelError):
    """Moment requested that does not exist for Drift/RW components."""


class SpatialModel(LatentModelError):
    """Time-series operation called on a spatial model."""


class TimeSeriesModel(LatentModelError):
    """Spatial operation called on a time-series model."""


class ScaleOverflow(LatentModelError):
    pass


class InsufficientAbscissae(LatentModelError):
    pass


class DegenerateInput(LatentModelError, ValueError):
    pass


class TooManyComponents(LatentModelError):
    pass


class FactorizationFailure(LatentModelError):
    pass


class SeriesTooShort(LatentModelError, ValueError):
    pass


class LagTooLarge(LatentModelError, ValueError):
    pass


class InsufficientScales(LatentModelError):
    pass


class InsufficientLags(LatentModelError):
    pass


class InsufficientReplications(LatentModelError):
    pass


class IoFailure(LatentModelError, OSError):
    pass


class ZeroVarianceScale(UserWarning):
    """Some wavelet-variance standard error is zero; identity weight used there."""


class UnprovenCompositionWarning(UserWarning):
    """Model composition outside the families with a proven identifiability result."""


class NonConvergenceWarning(UserWarning):
    pass
