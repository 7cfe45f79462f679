"""Exception hierarchy shared by every annealbench module."""


class AnnealBenchError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(AnnealBenchError, ValueError):
    pass


class SizeExceededError(AnnealBenchError):
    """Raised when exhaustive enumeration is requested above the size cap."""


class UnresolvedReferenceError(AnnealBenchError):
    """A run record has no ground-state reference energy yet."""


class InsufficientDataError(AnnealBenchError, ValueError):
    pass


class RefusalToFitError(InsufficientDataError):
    """The lower envelope has too few interior points for a scaling fit."""


class ConsistencyError(AnnealBenchError):
    pass


class ConfigError(AnnealBenchError):
    pass


class DataError(AnnealBenchError):
    """Malformed input file; ``lineno`` points at the offending line when known."""

    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where = f"{path}:{lineno}: " if lineno is not None else f"{path}: "
        super().__init__(where + message)
