"""
Exception hierarchy shared by every stage.

Each error carries the process exit code the CLI reports for it.
"""


class FusionError(Exception):
    """Base class for all expected failures."""
    exit_code = 1


class ShapeError(FusionError, ValueError):
    """Tensor or parameter dimensions do not agree."""
    exit_code = 3


class ContractError(FusionError, ValueError):
    """A documented precondition was violated by the caller."""
    exit_code = 3


class NumericError(FusionError, ArithmeticError):
    """A computation produced NaN or Inf."""
    exit_code = 4


class NumericAbort(NumericError):
    """Training stopped because the loss stopped being finite."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(f"non-finite loss at step {step}" + (f": {message}" if message else ""))


class GeometryError(FusionError, ValueError):
    """Invalid rigid transform or degenerate geometric input."""
    exit_code = 3


class ConfigError(FusionError, ValueError):
    """Invalid run configuration."""
    exit_code = 2


class ManifestError(FusionError, ValueError):
    """Checkpoint contents do not match the configured model."""
    exit_code = 2


class SchemaError(FusionError, ValueError):
    """A scene, feature or detection file is malformed."""
    exit_code = 3


class DataError(FusionError):
    """Input data is missing or inconsistent."""
    exit_code = 3
