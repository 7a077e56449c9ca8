"""Exception classes shared across the package."""


class DomainError(ValueError):
    """A point lies outside the domain on which a field is defined."""


class InadmissibleMaterialError(ValueError):
    """The elasticity tensor is not coercive on the sampled points."""


class MeshError(ValueError):
    """Invalid mesh request or a mesh with non-positive Jacobians."""


class LocateError(LookupError):
    """A point could not be located inside any mesh element."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class CoercivityError(RuntimeError):
    """A penalty block that should be positive definite is not."""


class ConfigError(ValueError):
    """Malformed or unknown configuration entries."""
