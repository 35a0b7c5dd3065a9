"""Exception hierarchy for cladoflow.

Every error raised on purpose by the library derives from
:class:`CladoflowError`, so callers can catch the whole family at once.
"""

from __future__ import annotations


class CladoflowError(Exception):
    """Base class for all library errors."""


# tree validation


class InvalidTree(CladoflowError, ValueError):
    """An edge list does not describe a binary cladogram."""


class WrongEdgeCount(InvalidTree):
    pass


class NotATree(InvalidTree):
    pass


class BadDegree(InvalidTree):
    pass


class BadLabels(InvalidTree):
    pass


class InvalidVertex(CladoflowError, ValueError):
    pass


class SameVertex(CladoflowError, ValueError):
    pass


# shapes and moves


class CapExceeded(CladoflowError, ValueError):
    """A requested size is above the cap of an exhaustive routine."""


class NotACladogram(CladoflowError, ValueError):
    """A shape with a multi-labelled leaf was passed where an injective one is needed."""


class TooSmall(CladoflowError, ValueError):
    pass


class BadEdge(CladoflowError, ValueError):
    pass


class BadLeaf(CladoflowError, ValueError):
    pass


class NotSymmetric(CladoflowError, ValueError):
    pass


class BadProfile(CladoflowError, ValueError):
    pass


class InternalInconsistency(CladoflowError, RuntimeError):
    """Two independent computations of the same quantity disagree."""


# input / configuration


class ParseError(CladoflowError, ValueError):
    """Malformed text input.

    Parameters
    ----------
    message : str
        Human readable description.
    line, column : int, optional
        1-based position of the offending character in tree text.
    key : str, optional
        Offending configuration key.
    """

    def __init__(self, message: str, *, line: int | None = None,
                 column: int | None = None, key: str | None = None):
        self.line = line
        self.column = column
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}, column {column}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)


class UsageError(CladoflowError, ValueError):
    pass
