"""Exception hierarchy shared across the toolkit."""


class AgriShareError(ValueError):
    """Base class for all validation and pipeline errors."""


class DataError(AgriShareError):
    """Malformed input data: missing files, bad headers, unparsable cells."""


class FingerprintMismatch(AgriShareError):
    """An artifact was produced under a different dimensionality-reduction model."""


class AuditViolation(AgriShareError):
    """A guarded code path touched data it must not read."""
