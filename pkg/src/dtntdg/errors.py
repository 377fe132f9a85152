"""Exception and warning types raised across the package."""


class GeometryError(ValueError):
    """Invalid mesh or domain description."""


class MaterialStraddle(GeometryError):
    """An element crosses a material interface."""


class PeriodicityViolation(GeometryError):
    """Left and right boundary faces cannot be paired."""


class NotApplicable(ValueError):
    """The requested quantity is undefined for this configuration."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula holds."""


class InvalidInput(ValueError):
    """Non-finite values in a linear system."""


class SingularSystem(RuntimeError):
    """The system matrix is exactly singular."""


class ResonanceDetected(RuntimeError):
    """The layered-medium interface system is singular."""


class DegenerateIncidence(ValueError):
    """Grazing incidence: the incident flux vanishes."""


class ConfigError(ValueError):
    """Malformed run configuration."""

    def __init__(self, message, field=None):
        if field is not None and not message.startswith(field):
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class RayleighWoodWarning(UserWarning):
    """The configuration is at (or very near) a Rayleigh-Wood anomaly."""


class IllConditionedWarning(UserWarning):
    """The plane-wave system is numerically ill-conditioned."""
