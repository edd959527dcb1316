"""Exception types shared across the workbench."""


class PermattackError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(PermattackError, ValueError):
    """A caller-supplied parameter violates a documented precondition."""


class DegenerateOrbitError(PermattackError, ValueError):
    """A key-generator orbit collapsed and cannot drive a usable permutation."""


class DataFormatError(PermattackError, ValueError):
    """A file or byte stream does not match its declared format.

    ``offset`` is the byte offset at which parsing failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ShapeError(PermattackError, ValueError):
    """Array shapes or dimensions do not match."""


class CheckpointError(PermattackError, ValueError):
    """A checkpoint file is unreadable or incompatible."""


class ArchitectureMismatchError(PermattackError, ValueError):
    """A checkpoint's architecture does not match the expected model."""


class DivergenceError(PermattackError, ArithmeticError):
    """Training produced a non-finite loss."""


class OracleError(PermattackError, RuntimeError):
    """A region-of-interest oracle failed while evaluating a candidate key."""
