"""Exception hierarchy shared across the package."""


class VtoptError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(VtoptError):
    """Invalid configuration value, file, or grid definition."""


class GeometryError(VtoptError):
    """Geometric query outside the domain."""


class StructuralError(VtoptError):
    """Singular or under-constrained state problem."""


class NumericalError(VtoptError):
    """Solver or root-finding failure beyond the requested tolerance."""


class StaleStateError(VtoptError):
    """A cached forward-pass result was used after its inputs changed."""
