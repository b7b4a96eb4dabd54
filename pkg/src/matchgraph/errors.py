"""Exception types shared across the package.

The split mirrors the process exit codes: UsageError maps to exit code 1,
DataError (and subclasses) to exit code 2.
"""


class UsageError(Exception):
    """Bad invocation: missing arguments, contradictory options, N too small."""


class DataError(Exception):
    """Malformed or inconsistent input data."""


class FormatError(DataError):
    """A binary or text artifact violates its file format.

    ``offset`` is the byte position of the first offending field when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class ProtocolError(DataError):
    """An external verifier process violated the wire protocol."""
