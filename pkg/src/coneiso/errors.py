"""Exception types shared across the toolkit."""


class ConeIsoError(Exception):
    """Base class for all toolkit errors."""


class InvalidCone(ConeIsoError):
    """Cone construction failed (empty interior, nonconvex sector, bad normals)."""


class DegenerateGauge(ConeIsoError):
    """Gauge vanishes on a direction where positivity is required."""


class EmptyIntersection(ConeIsoError):
    """W and the cone have no common point."""


class InvalidParameters(ConeIsoError):
    """Catalog weight parameters are out of range."""


class DomainError(ConeIsoError):
    """A sample point left the open cone."""


class ToleranceNotMet(ConeIsoError):
    """Adaptive quadrature exhausted its refinement budget."""


class DegenerateBoundary(ConeIsoError):
    """A facet or boundary normal is undefined."""


class CurvatureUndefined(ConeIsoError):
    """Boundary is not twice differentiable at the requested point."""


class NonConvergence(ConeIsoError):
    """Iterative linear solve exceeded its budget."""


class IncompatibleData(ConeIsoError):
    """Discrete Neumann compatibility defect too large after projection."""


class SingularDensity(ConeIsoError):
    """Mass matrix of the sector eigenproblem is numerically singular."""


class ConfigError(ConeIsoError):
    """Experiment configuration failed validation."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")
