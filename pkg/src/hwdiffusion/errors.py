"""Exception hierarchy.

Everything raised on purpose by the library derives from :class:`HWDiffusionError`.
Input problems additionally subclass :class:`ValueError` so callers that only
care about "bad argument" can catch that.
"""


class HWDiffusionError(Exception):
    """Base class for library errors."""


class ValidationError(HWDiffusionError, ValueError):
    """An argument violates a documented precondition."""


class ModelValidationError(ValidationError):
    """A queue-primitive field is malformed.

    ``path`` is the JSON path of the offending field (``"$.P[1][0]"``) when known.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class NonUnitMeanPhaseError(ModelValidationError):
    pass


class SingularRoutingError(ModelValidationError):
    pass


class NonEllipticCovarianceError(ModelValidationError):
    pass


class BadEpsilonError(ValidationError):
    pass


class AsymmetricHessianError(ValidationError):
    pass


class BadDeltaError(ValidationError):
    pass


class BadVarsigmaError(ValidationError):
    pass


class NonFiniteError(HWDiffusionError, FloatingPointError):
    """The chain left the finite floats. ``step`` is the failing step index."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class EmptyAccumulatorError(ValidationError):
    pass


class TooFewBatchesError(ValidationError):
    pass


class LagTooLargeError(ValidationError):
    pass


class DepthTooSmallError(ValidationError):
    pass


class ZeroVarianceError(ValidationError):
    pass


class NoFeasibleQError(HWDiffusionError):
    def __init__(self, message, max_eig_strict=None, max_eig_semi=None):
        self.max_eig_strict = max_eig_strict
        self.max_eig_semi = max_eig_semi
        super().__init__(message)


class DriftConditionViolatedError(HWDiffusionError):
    pass


class BadIntervalError(ValidationError):
    pass


class DimensionMismatchError(ValidationError):
    pass


class DegenerateInputError(ValidationError):
    pass
