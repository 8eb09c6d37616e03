"""Exception types shared across the package."""


class InflabError(Exception):
    """Base class for all package-specific errors."""


class GridMismatchError(InflabError):
    """Two grid densities do not live on the same grid."""


class CoverageError(InflabError):
    """The grid does not cover enough of the mass being represented."""


class InsufficientSupportError(InflabError):
    """The support is too small for the requested finite-difference stencil."""


class BoundNotApplicableError(InflabError):
    """A curvature-based bound was requested for a density without positive curvature."""


class RegimeNotCoveredError(InflabError):
    """Parameters fall outside the regime where the closed form is valid."""


class BoundaryMinimumError(InflabError):
    """A minimiser sits on the grid boundary, so the result would be unreliable."""


class SimulationDivergedError(InflabError):
    """A simulated path produced NaN or overflow."""


class UndefinedRatioError(InflabError):
    """A contraction factor was requested at a point where its denominator vanishes."""


class WitnessNotFoundError(InflabError):
    """A search for an exceedance witness failed."""
