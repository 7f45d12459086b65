"""Exception and warning types raised by the numerical routines."""


class ExpBergmanError(Exception):
    """Base class for numerical failures in this package."""


class BoundaryError(ExpBergmanError, ValueError):
    """A point lies on or outside the admissible interior of the ball."""


class QuadratureDivergence(ExpBergmanError):
    """A quadrature node left the open unit ball."""


class InsufficientResolution(ExpBergmanError):
    """Too many Monte Carlo samples could not be classified."""


class SeparationUncertain(ExpBergmanError):
    """A lattice pair could not be certified as separated."""


class NonFiniteSample(ExpBergmanError):
    """An integrand returned NaN or inf at a sample point."""


class OverflowGuard(ExpBergmanError):
    """An exponent is too large to be exponentiated safely."""


class DegreeOverflow(ExpBergmanError):
    """A polynomial operation exceeded the configured maximum degree."""


class NonHermitian(ExpBergmanError):
    """An operator matrix is not Hermitian within its error estimate."""


class RadiusWarning(UserWarning):
    """Radius exceeds 1/80, where the ball comparison theorems are not claimed."""
