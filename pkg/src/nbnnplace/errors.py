"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented invariant (bad dimensions, bad parameters)."""


class FormatError(ValueError):
    """A file does not carry the expected magic number or version."""


class CorruptionError(ValueError):
    """A file is structurally damaged (truncated or inconsistent)."""


class InsufficientDataError(ValueError):
    """Not enough eligible data to satisfy a request.

    Carries ``eligible`` so callers can report how much data was available.
    """

    def __init__(self, message: str, eligible: int = 0):
        super().__init__(message)
        self.eligible = eligible
