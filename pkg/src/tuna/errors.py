"""Exception types raised across the package.

Every error derives from :class:`TunaError`; most also derive from the closest
builtin (``ValueError``, ``OSError``) so callers can catch either.
"""


class TunaError(Exception):
    pass


# vector math / stub encoder
class ZeroVectorError(TunaError, ValueError):
    pass


class NonFiniteError(TunaError, ValueError):
    pass


class DimensionMismatchError(TunaError, ValueError):
    pass


class ShapeMismatchError(TunaError, ValueError):
    pass


class EmptyTextError(TunaError, ValueError):
    pass


class EmptyIdError(TunaError, ValueError):
    pass


# tag mining
class EmptyAfterNormalizeError(TunaError, ValueError):
    pass


# datastore
class DuplicateIdError(TunaError, ValueError):
    pass


class NonUnitKeyError(TunaError, ValueError):
    pass


class EmptyIndexError(TunaError, ValueError):
    pass


class SealedIndexError(TunaError, RuntimeError):
    pass


class StoreIOError(TunaError, OSError):
    pass


class BadMagicError(StoreIOError):
    pass


class VersionUnsupportedError(StoreIOError):
    pass


class ChecksumMismatchError(StoreIOError):
    pass


class CorruptStoreError(StoreIOError):
    """Checksum passed but the payload does not parse (writer bug or forged CRC)."""


# assembly / evaluation
class EmptyInputError(TunaError, ValueError):
    pass


class MissingCaptionError(TunaError, ValueError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__("entries without stored captions: " + ", ".join(self.ids))


class UnmatchedIdError(TunaError, ValueError):
    pass


class EmptyCountsError(TunaError, ValueError):
    pass


class OutOfRangeError(TunaError, ValueError):
    pass


class InvalidAnswerError(TunaError, ValueError):
    pass
