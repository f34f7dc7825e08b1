"""Exception hierarchy shared by all corrtrack modules."""


class CorrTrackError(Exception):
    """Base class for every error raised by this package."""


class InvalidShapeError(CorrTrackError, ValueError):
    pass


class BoundsError(CorrTrackError, IndexError):
    pass


class PyramidShapeError(InvalidShapeError):
    pass


class MemoryShapeError(InvalidShapeError):
    pass


class EmptyMemoryError(CorrTrackError, ValueError):
    pass


class InvalidArgumentError(CorrTrackError, ValueError):
    pass


class RangeError(CorrTrackError, ValueError):
    pass


class ClassMismatchError(CorrTrackError, ValueError):
    pass


class InvalidBoxError(CorrTrackError, ValueError):
    pass


class FeatureError(CorrTrackError, ValueError):
    pass


class DegenerateFeatureError(FeatureError):
    pass


class ConsistencyError(CorrTrackError, ValueError):
    pass


class OrderingError(CorrTrackError, ValueError):
    pass


class InvalidRowError(CorrTrackError, ValueError):
    pass


class ScenarioSpecError(CorrTrackError, ValueError):
    pass


class ParseError(CorrTrackError, ValueError):
    """Malformed input text; ``lineno`` is 1-based when known."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
