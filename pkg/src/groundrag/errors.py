"""Exception hierarchy. Every error raised by the package derives from GroundragError."""


class GroundragError(Exception):
    pass


# ingest
class DecodeError(GroundragError):
    pass


class EmptyDocument(GroundragError):
    pass


class ArityMismatch(GroundragError):
    pass


class EmptyTable(GroundragError):
    pass


# index
class DimensionMismatch(GroundragError):
    pass


class DuplicateChunkId(GroundragError):
    pass


class UnknownChunk(GroundragError, KeyError):
    pass


class SnapshotError(GroundragError):
    pass


class VersionMismatch(SnapshotError):
    pass


class ChecksumMismatch(SnapshotError):
    pass


# providers
class ProviderError(GroundragError):
    pass


class HttpError(ProviderError):
    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code


class ProviderTimeout(ProviderError):
    pass


class DimensionDrift(ProviderError):
    pass


class EmptyInput(GroundragError, ValueError):
    pass


# retrieval
class EmptyQuery(GroundragError, ValueError):
    pass


class EmptyIndex(GroundragError):
    pass


# generation
class NoSnippets(GroundragError):
    pass


class BudgetTooSmall(GroundragError):
    pass


class InvalidCitation(GroundragError):
    pass


class EmptyAnswer(GroundragError, ValueError):
    pass


# verify / eval
class EmptySentence(GroundragError, ValueError):
    pass


class UnknownQuery(GroundragError, KeyError):
    pass


class MissingKeyPoints(GroundragError):
    pass


class EmptySnippets(GroundragError):
    pass
