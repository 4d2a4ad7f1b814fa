"""Exception hierarchy."""


class ObsInferError(Exception):
    """Base class for all package errors."""


class DomainError(ObsInferError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class QuadratureError(ObsInferError, ArithmeticError):
    """Quadrature failed to reach the requested tolerance.

    Attributes
    ----------
    value : float
        Best estimate obtained.
    error : float
        Its reported error bound.
    """

    def __init__(self, message, value, error):
        super().__init__(message)
        self.value = value
        self.error = error


class UnsupportedPairingError(ObsInferError):
    pass


class DegenerateError(ObsInferError, ArithmeticError):
    """A quantity needed for the computation is (numerically) degenerate."""


class VariantMismatchError(ObsInferError, TypeError):
    pass


class EstimationError(ObsInferError, ArithmeticError):
    pass


class NoRootError(EstimationError):
    pass


class SingularMatrixError(EstimationError):
    pass


class BoundaryError(EstimationError):
    pass


class ConfigError(ObsInferError, ValueError):
    pass
