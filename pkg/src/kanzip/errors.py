"""Exception types shared across the package."""


class KanzipError(Exception):
    """Base class for all kanzip errors."""


class ConfigError(KanzipError):
    """Invalid configuration: bad basis spec, impossible cluster count, etc."""


class DimensionError(KanzipError):
    """Array shape does not match the declared layer/model geometry."""


class NumericError(KanzipError):
    """Non-finite input, gradient, or loss."""


class DataFormatError(KanzipError):
    """Malformed dataset or checkpoint file."""


class IntegrityError(KanzipError):
    """Model pieces are inconsistent (e.g. a layer without a codebook)."""
