"""Exception hierarchy shared by the library and the command line."""


class EbookHmmError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigurationError(EbookHmmError, ValueError):
    """Bad parameters, empty inputs, or inconsistent settings."""

    exit_code = 2


class AlphabetMismatchError(ConfigurationError):
    """Two sequences (or a sequence and a model) use different alphabets."""


class CorpusError(EbookHmmError, OSError):
    """A transcription file could not be read or decoded."""

    exit_code = 3


class ModelFormatError(EbookHmmError, ValueError):
    """A serialized model or alignment file is malformed or inconsistent."""

    exit_code = 3


class ModelConstructionError(EbookHmmError, ValueError):
    exit_code = 4


class BandingError(EbookHmmError, ArithmeticError):
    """The band excludes every complete state path; retry with a wider band."""

    exit_code = 4
