"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`TinyTCError` so callers
(and the CLI's exit-code mapping) can catch them by family.
"""


class TinyTCError(Exception):
    """Base class for all toolkit errors."""


# ingest ---------------------------------------------------------------------

class IngestError(TinyTCError):
    pass


class BadMagic(IngestError):
    pass


class TruncatedRecord(IngestError):
    pass


class UnsupportedLinkType(IngestError):
    pass


class UnsupportedProtocol(IngestError):
    pass


class MalformedHeader(IngestError):
    pass


class EmptyAfterCleaning(IngestError):
    pass


class EmptySession(IngestError):
    pass


class InvalidSpec(IngestError, ValueError):
    pass


# nn -------------------------------------------------------------------------

class NNError(TinyTCError):
    pass


class ShapeMismatch(NNError, ValueError):
    pass


class StaleCache(NNError):
    pass


class EmptyDataset(NNError, ValueError):
    pass


# arch / search --------------------------------------------------------------

class CollapsedWidth(TinyTCError, ValueError):
    """Spatial length of an activation would drop below one."""


class InvalidGenome(TinyTCError, ValueError):
    pass


class SearchError(TinyTCError):
    pass


class InfeasibleStart(SearchError):
    pass


class MutationStarvation(SearchError):
    pass


class ClassTooSmall(SearchError, ValueError):
    pass


class CorruptCheckpoint(SearchError):
    pass


# quantization ---------------------------------------------------------------

class QuantizationError(TinyTCError):
    pass


class UnsupportedTopology(QuantizationError):
    pass


class EmptyCalibrationSet(QuantizationError, ValueError):
    pass


# model files ----------------------------------------------------------------

class ModelFileError(TinyTCError):
    pass


class ModelBadMagic(ModelFileError):
    pass


class VersionUnsupported(ModelFileError):
    pass


class ChecksumMismatch(ModelFileError):
    pass


class IoFailure(ModelFileError, OSError):
    pass


class ConfigError(TinyTCError, ValueError):
    pass
