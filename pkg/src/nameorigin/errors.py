"""Exception hierarchy shared by all nameorigin modules."""


class NameOriginError(Exception):
    """Base class for every error raised by this package."""


# name codec
class EmptyAfterNormalization(NameOriginError, ValueError):
    pass


class MalformedEncoding(NameOriginError, ValueError):
    pass


# numerical core
class ShapeMismatch(NameOriginError, ValueError):
    pass


class LabelOutOfRange(NameOriginError, ValueError):
    pass


class NoRecordedForward(NameOriginError, RuntimeError):
    pass


# model
class InvalidConfig(NameOriginError, ValueError):
    pass


class EmptyTrainingSet(NameOriginError, ValueError):
    pass


class ClassIndexOutOfRange(LabelOutOfRange):
    pass


class ModelFormatError(NameOriginError, ValueError):
    """The model file is not a readable model file."""


class FormatVersionMismatch(ModelFormatError):
    pass


class ChecksumMismatch(ModelFormatError):
    pass


# dataset
class InputFormatError(NameOriginError, ValueError):
    """Base for malformed user-supplied input files."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ParseError(InputFormatError):
    pass


class UnknownLabel(InputFormatError):
    pass


class EmptyFile(InputFormatError):
    pass


class TooFewSamples(NameOriginError, ValueError):
    pass


# metrics
class LengthMismatch(NameOriginError, ValueError):
    pass


class EmptyMatrix(NameOriginError, ValueError):
    pass


# pseudo labelling
class Unclassifiable(NameOriginError, ValueError):
    pass


class InvalidWeights(NameOriginError, ValueError):
    pass


# prevalence
class UnknownOrigin(NameOriginError, KeyError):
    pass


class MissingMapping(NameOriginError, KeyError):
    pass


class MissingHomeSet(NameOriginError, KeyError):
    pass
