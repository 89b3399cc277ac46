"""Exception types shared across the package."""


class PorodeError(Exception):
    """Base class for all package errors."""


class ConfigError(PorodeError):
    """Invalid run configuration or input file (exit code 2)."""


class GeometryError(PorodeError):
    """Invalid geometric model: bad polylines, overlaps, out-of-domain pores."""


class MeshingError(PorodeError):
    """Triangulation failed; usually fixable by refining the sizing."""


class SolverError(PorodeError):
    """A linear solve failed or violated its residual contract."""
