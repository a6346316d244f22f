"""Exception types shared across the package."""


class IflError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(IflError):
    """Fields or operators built for different box geometries were mixed."""


class AsymmetricKernelError(IflError):
    """Kernel weights violate weight(v) == weight(-v)."""


class NotNormalizedError(IflError):
    """Kernel weights do not sum to one within tolerance."""


class SelfJumpPresentError(IflError):
    """Kernel assigns weight to the zero offset."""


class ReducibleKernelError(IflError):
    """Kernel offsets do not generate the full lattice."""


class SiteOutsideInteriorError(IflError):
    """A single-site operation was asked for a non-interior site."""


class NoConvergenceError(IflError):
    """An iterative linear solve hit its iteration cap or residual check."""


class NonpositiveCurvatureError(IflError):
    """The curvature ceiling passed to a bound must be positive."""


class EmptySeriesError(IflError):
    """A sample series was empty."""


class SeriesTooShortError(IflError):
    """A sample series is too short for autocorrelation analysis."""


class LatticeTooLargeError(IflError):
    """Brute-force quadrature requested on more interior sites than supported."""


class CutoffInsufficientError(IflError):
    """Quadrature output is not stable under doubling of cutoff or node count."""


class ConfigError(IflError):
    """An experiment configuration file is malformed or inconsistent."""
