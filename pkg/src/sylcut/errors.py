"""Exception types shared across the package.

Everything raised on bad *data* derives from SylcutError so the CLI can map
it to exit code 1. Contract violations (caller bugs, e.g. an empty interval
or a negative tolerance) raise plain ValueError instead.
"""


class SylcutError(Exception):
    """Base class for data and validation errors."""


class FormatError(SylcutError):
    """File does not follow the expected on-disk format."""


class TruncationError(FormatError):
    """Declared payload size disagrees with the bytes actually present."""


class DataError(SylcutError):
    """Payload is structurally valid but contains invalid values (NaN/Inf)."""


class ValidationError(SylcutError):
    """Parsed content violates a type invariant (overlaps, bad ordering...)."""


class ManifestError(SylcutError):
    """Manifest is malformed or contains duplicate utterance ids."""


class CapacityError(SylcutError):
    """Input exceeds a configured resource budget."""
