"""Package exception hierarchy."""


class TeachbotError(Exception):
    """Base class for package-specific failures."""


class NumericError(TeachbotError):
    """A computation produced or received non-finite values."""


class FormatError(TeachbotError):
    """An input file does not match its documented layout."""


class ValidationError(TeachbotError):
    """User-supplied configuration, rules or data failed validation."""
