"""Exception types raised across the package."""


class ADNetError(Exception):
    """Base class for all package errors."""


class InvalidShapeError(ADNetError, ValueError):
    pass


class ShapeMismatchError(ADNetError, ValueError):
    pass


class InvalidGeometryError(ADNetError, ValueError):
    pass


class InvalidParameterError(ADNetError, ValueError):
    pass


class InvalidTargetError(ADNetError, ValueError):
    pass


class InvalidConfigError(ADNetError, ValueError):
    pass


class InvalidGradientError(ADNetError, ValueError):
    pass


class CorruptCheckpointError(ADNetError, ValueError):
    pass


class DegeneratePolygonError(ADNetError, ValueError):
    pass


class EmptyDatasetError(ADNetError, ValueError):
    pass


class EmptyEvaluationError(ADNetError, ValueError):
    pass


class AnnotationParseError(ADNetError, ValueError):
    """Malformed annotation record; ``lineno`` is 1-based."""

    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno
