"""Exception types raised across the package."""


class RiTreeError(Exception):
    """Base class for all errors raised by ritree."""


class ZeroVectorError(RiTreeError, ValueError):
    """A vector with zero norm was given where a direction is required."""


class DimensionMismatchError(RiTreeError, ValueError):
    pass


class EmptyInputError(RiTreeError, ValueError):
    pass


class ParseError(RiTreeError, ValueError):
    """Malformed input line. ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class DuplicateDocIdError(RiTreeError, ValueError):
    pass


class UnknownDocIdError(RiTreeError, KeyError):
    pass


class InvalidStatsError(RiTreeError, ValueError):
    pass


class TooFewPointsError(RiTreeError, ValueError):
    pass


class NotUnitError(RiTreeError, ValueError):
    pass


class EmptyNodeError(RiTreeError, ValueError):
    pass


class DegenerateSplitError(RiTreeError):
    """k-means could not separate a node's entries (all identical)."""


class BadLevelError(RiTreeError, IndexError):
    pass


class FormatError(RiTreeError, ValueError):
    """Corrupted or incompatible serialized tree."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class EmptyTableError(RiTreeError, ValueError):
    pass


class TooFewClustersError(RiTreeError, ValueError):
    pass


class DegenerateSampleError(RiTreeError, ValueError):
    pass


class MissingLabelError(RiTreeError, KeyError):
    def __init__(self, doc_id):
        self.doc_id = doc_id
        super().__init__(f"no label for document {doc_id!r}")


class DimensionSetMismatchError(RiTreeError, ValueError):
    pass
