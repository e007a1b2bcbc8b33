"""Exception types for the extraction pipeline."""


class ExtractError(Exception):
    """Base class for extraction failures."""


class ImageDecodeError(ExtractError):
    """One image could not be decoded; batch processing skips it."""


class BackendUnavailableError(ExtractError):
    """The descriptor network cannot be constructed.

    Raised at startup, before any image work, with a message that says
    how to make the backend usable.
    """


class ParameterError(ExtractError):
    """Invalid extraction parameters."""
