"""Exception hierarchy shared across the package."""


class CropforgeError(Exception):
    """Base class for runtime failures raised by cropforge."""


class DecodeError(CropforgeError):
    """Malformed or undecodable image stream."""


class UnsupportedFormatError(DecodeError):
    """Stream is intact but not a format we decode (PNG/JPEG only)."""


class PipelineError(CropforgeError):
    """Dataset-level failure: empty corpus, failure budget exceeded, corrupt output."""
