"""Exception hierarchy shared by every module."""


class HateAlignError(Exception):
    pass


class DimensionError(HateAlignError, ValueError):
    pass


class ValidationError(HateAlignError, ValueError):
    pass


class ConfigError(ValidationError):
    pass


class StructuralError(HateAlignError, ValueError):
    pass


class NonFiniteError(HateAlignError, ArithmeticError):
    pass


class UndefinedMetricError(ValidationError):
    """Raised when a metric needs both classes but only one is present."""


class ManifestParseError(HateAlignError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class CheckpointError(HateAlignError):
    pass


class CheckpointParseError(CheckpointError, ValueError):
    pass


class CheckpointVersionError(CheckpointError, ValueError):
    pass


class CheckpointShapeError(CheckpointError, ValueError):
    pass
