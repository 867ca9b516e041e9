"""Exception types shared across the pipeline.

Each carries the CLI exit code it maps to.
"""


class LovmmError(Exception):
    exit_code = 1


class ConfigError(LovmmError):
    exit_code = 2


class SimulationError(LovmmError):
    exit_code = 3


class NotFoundError(LovmmError):
    exit_code = 4


class DivergenceDetected(LovmmError):
    exit_code = 5


# parser
class UnparseableInstruction(LovmmError, ValueError):
    exit_code = 2


class BackendUnavailable(LovmmError):
    exit_code = 3


class InvalidInstruction(LovmmError, ValueError):
    exit_code = 2


# encoders
class EmptyText(LovmmError, ValueError):
    pass


class BadImageShape(LovmmError, ValueError):
    pass


class MissingLabels(LovmmError, ValueError):
    pass


# vlmap
class EmptyFrameSet(LovmmError, ValueError):
    pass


class DimensionMismatch(LovmmError, ValueError):
    pass


class LabelNotFound(NotFoundError):
    pass


class UnreachableTarget(SimulationError):
    pass


# policy / training
class ShapeMismatch(LovmmError, ValueError):
    pass


class OutOfBoundsAction(LovmmError, ValueError):
    pass


# simulator
class PlacementFailure(SimulationError):
    pass


class UnknownWorkspace(SimulationError, KeyError):
    pass


class InvalidSequence(SimulationError):
    pass
