"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration document or parameter value."""


class MeshError(ValueError):
    """Mesh generation or validation failure."""


class MeshParseError(MeshError):
    """Malformed mesh file; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(RuntimeError):
    """Solver breakdown (singular factorization, NaN state, non-convergence)."""
