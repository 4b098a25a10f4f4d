"""Exception hierarchy shared by every module."""


class ReconEvalError(Exception):
    """Base class for all library errors."""


class MalformedFile(ReconEvalError):
    pass


class EmptyCloud(ReconEvalError):
    pass


class IoFailure(ReconEvalError):
    pass


class UnsupportedBitDepth(ReconEvalError):
    pass


class DegenerateCloud(ReconEvalError):
    pass


class AmbiguousAxes(ReconEvalError):
    """Principal axes cannot be told apart; use feature registration instead."""


class RegistrationFailed(ReconEvalError):
    pass


class NoCorrespondences(ReconEvalError):
    pass


class DimensionMismatch(ReconEvalError):
    pass


class TooSmall(ReconEvalError):
    pass


class BackendFailure(ReconEvalError):
    pass


class EmptyInput(ReconEvalError):
    pass


class SolverDiverged(ReconEvalError):
    pass


class DegenerateGeometry(ReconEvalError):
    pass


class BoxDisjoint(ReconEvalError):
    pass


class ConfigError(ReconEvalError):
    """Invalid pipeline configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
