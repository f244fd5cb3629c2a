"""Exceptions shared across the package."""


class WndynError(Exception):
    """Base class for package errors."""


class SupportEscape(WndynError):
    """Transported mass left the phase-space grid."""


class NotPositiveType(WndynError):
    """A covariance function is not the Fourier transform of a positive measure."""


class AssumptionViolation(WndynError):
    """A spectral density fails the regularity or decay requirements."""


class PVDivergence(WndynError):
    """A principal-value quadrature did not converge."""
