"""Exception types raised across the package."""


class LMSkyError(Exception):
    """Base class for all package errors."""


class InvalidInputError(LMSkyError, ValueError):
    """An argument violates a documented precondition or type invariant."""


class GeometryMismatchError(LMSkyError, ValueError):
    """Two images or an image and a transport matrix disagree in shape."""


class UndefinedScaleError(LMSkyError, ValueError):
    """Scale-invariant metric called with an all-zero reference."""


class ImageFormatError(LMSkyError):
    """Malformed image header."""


class TruncatedFileError(ImageFormatError):
    """Image payload shorter than the header promises."""


class UnsupportedFormatError(LMSkyError):
    """File extension or PFM variant we do not handle."""


class CacheFormatError(LMSkyError):
    """Transport cache file has a bad magic number or version."""
