"""Common exception base for the toolkit.

Every stage failure raised by this package derives from ForgeError so the
CLI can map it to a single-line error category (the class name).
"""


class ForgeError(Exception):
    """Base class for all toolkit errors."""


class IoError(ForgeError):
    """File could not be read or written."""
