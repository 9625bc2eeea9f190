"""Exception and warning types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericsError and
its subclasses -> 3, OSError -> 4.
"""


class ChaosmapError(Exception):
    """Base class for package-specific failures."""


class ConfigError(ChaosmapError):
    """Invalid or inconsistent run configuration."""


class NumericsError(ChaosmapError):
    """Numerical failure while executing a run."""


class MapDegeneracyError(NumericsError):
    """Transport-map Jacobian determinant fell to or below the floor.

    Attributes
    ----------
    node : ndarray or None
        Germ-space quadrature node where degeneracy was detected.
    determinant : float or None
        Offending Jacobian determinant.
    partial : list or None
        States accepted before the failure; populated by ``propagate``.
    """

    def __init__(self, message, node=None, determinant=None, partial=None):
        super().__init__(message)
        self.node = node
        self.determinant = determinant
        self.partial = partial


class DivergenceError(NumericsError):
    """A Monte-Carlo particle left the finite floating-point range."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class GridDomainError(NumericsError):
    """Density grid too small or leaking mass through its boundary."""


class StabilityError(NumericsError):
    """A solver step produced an invalid (negative) density."""

    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class SupportError(NumericsError):
    """Support mismatch between two densities (e.g. in a divergence)."""


class GridCoverageWarning(UserWarning):
    """Grid truncates non-negligible mass of the sampled density."""


class NonNormalizableWarning(UserWarning):
    """Stationary weight does not decay; grid normalization is formal."""
