"""Exception hierarchy shared by all modules."""


class DelayDopplerError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(DelayDopplerError, ValueError):
    """An input violates a type invariant (shape, sign, finiteness)."""


class RangeError(ValidationError):
    """A delay or Doppler value lies outside the unambiguous range of a grid."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateGeometryError(DelayDopplerError, ValueError):
    """A sphere coincides with the transmitter or receiver."""


class ConfigError(ValidationError):
    """Detector or estimator configuration is inconsistent."""


class NoCandidate(DelayDopplerError):
    """The residual carries no energy, so no new path can be proposed."""


class IllConditionedError(DelayDopplerError, ValueError):
    """The atom matrix is rank deficient beyond the ridge tolerance.

    ``pairs`` lists index pairs of paths whose atoms are nearly collinear.
    """

    def __init__(self, message, pairs=()):
        super().__init__(message)
        self.pairs = list(pairs)


class SingularFisherError(IllConditionedError):
    """The Fisher information matrix cannot be inverted."""


class NumericalError(DelayDopplerError, ArithmeticError):
    """A cost or parameter became non-finite during refinement.

    ``last_valid`` holds the last finite iterate (list of PathParams).
    """

    def __init__(self, message, last_valid=None):
        super().__init__(message)
        self.last_valid = last_valid


class UndefinedMetricError(DelayDopplerError, ValueError):
    """A metric was requested on input for which it is undefined."""


class ParseError(DelayDopplerError, ValueError):
    """A frame file or CSV could not be parsed."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class AlignmentError(DelayDopplerError, ValueError):
    """Estimates and ground truth refer to different frame indices."""
