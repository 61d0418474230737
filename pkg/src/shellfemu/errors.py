"""Exception hierarchy shared across the package."""


class ShellFemuError(Exception):
    """Base class for all package-specific errors."""


class KnotVectorError(ShellFemuError):
    """Malformed knot vector (not open, decreasing, or inconsistent with degree)."""


class SingularGeometryError(ShellFemuError):
    """Degenerate surface tangents at an evaluation point."""


class MappingError(ShellFemuError):
    """FE mesh and material mesh are not conforming, or a mapped coordinate
    leaves the reference square."""


class ConfigError(ShellFemuError):
    """Invalid run configuration; ``field`` holds the offending key path."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class ForwardSolveError(ShellFemuError):
    """Newton iteration failed to converge; carries the last residual norm."""

    def __init__(self, message, residual_norm=None):
        self.residual_norm = residual_norm
        super().__init__(message)


class ResidualEvaluationError(ShellFemuError):
    """A residual evaluation could not be completed (e.g. forward solve failed);
    the optimizer treats the trial step as rejected."""


class SynthesisError(ShellFemuError):
    """Invalid synthetic-experiment request (e.g. inverse-crime mesh pairing)."""
