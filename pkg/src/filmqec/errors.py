"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ``ConfigError`` -> 2, ``DataError`` -> 3,
``ModelError`` -> 4.
"""


class FilmQECError(Exception):
    """Base class for all package errors."""


class ConfigError(FilmQECError, ValueError):
    pass


class DataError(FilmQECError, ValueError):
    pass


class ModelError(FilmQECError, ValueError):
    pass


# calibration
class MissingQubit(DataError):
    pass


class MissingEdge(DataError):
    pass


class NonContiguousChain(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class FormatError(DataError):
    """A file did not match its binary or JSON layout."""


# simulation
class NonPositiveDuration(DataError):
    pass


# matching
class DegenerateProbability(DataError):
    """An edge fault probability >= 0.5 would give a non-positive weight."""


# nn / decoder / pipeline
class ShapeMismatch(ModelError):
    pass


class EmptyGraph(DataError):
    pass


class UntrainedModel(ModelError):
    pass


class MismatchedModel(ModelError):
    pass


class EmptyDataset(DataError):
    pass
