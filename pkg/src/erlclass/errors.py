"""Exception hierarchy.

The three base classes map onto CLI exit codes: ConfigError -> 2,
DataError -> 3, ModelError -> 4.
"""


class ErlError(Exception):
    exit_code = 1


class ConfigError(ErlError):
    exit_code = 2


class DataError(ErlError):
    exit_code = 3


class ModelError(ErlError):
    exit_code = 4


class InvalidCoordinate(DataError, ValueError):
    pass


class EmptyEvaluation(DataError, ValueError):
    pass


class UndefinedAuc(DataError, ValueError):
    pass


class GenerationFailed(DataError, RuntimeError):
    pass


class DegenerateLabels(ModelError, ValueError):
    pass


class DimensionMismatch(ModelError, ValueError):
    pass


class ExplainerUnsupported(ModelError, TypeError):
    pass


class UndefinedImportance(ModelError, ValueError):
    pass


class InvalidBatching(ConfigError, ValueError):
    pass


class StratificationImpossible(UserWarning):
    """Emitted when a class has too few ERLs to appear in every partition."""
