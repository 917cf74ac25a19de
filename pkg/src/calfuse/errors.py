"""Exception classes shared across the engine.

The CLI maps these onto exit codes: ValidationError -> 1,
FormatError (and OS-level I/O failures) -> 2.
"""


class CalfuseError(Exception):
    """Base class for all engine errors."""


class ValidationError(CalfuseError):
    """Caller violated a precondition (bad shape, bad range, bad config)."""


class FormatError(CalfuseError):
    """An input file is malformed (bad magic, truncation, bad encoding)."""
