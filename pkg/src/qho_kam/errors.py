"""Exception types shared across the package."""


class QhoKamError(Exception):
    """Base class for all package errors."""


class ConfigError(QhoKamError, ValueError):
    """Invalid run configuration."""


class DomainError(QhoKamError, ValueError):
    """An operation was called outside its domain."""


class QuadratureError(QhoKamError):
    """Quadrature rule too coarse for the requested integrand."""


class AliasingError(QhoKamError):
    """Fourier coefficients polluted by aliasing on the theta grid."""


class NumericalError(QhoKamError):
    """A numerical tolerance check failed."""


class UncarvedDivisorError(NumericalError):
    """A divisor below the machine floor was hit outside the carved region."""

    def __init__(self, k, i, j, value):
        self.k = tuple(int(c) for c in k)
        self.i = int(i)
        self.j = int(j)
        self.value = float(value)
        super().__init__(
            f"uncarved small divisor at k={self.k}, i={self.i}, j={self.j}: {self.value:.3e}"
        )
