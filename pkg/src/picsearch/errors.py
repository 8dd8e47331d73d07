"""Exception types raised across the package."""


class PicError(Exception):
    """Base class for every error raised by picsearch."""

    kind = "PicError"


class RangeError(PicError, ValueError):
    kind = "RangeError"


class DimensionMismatch(PicError, ValueError):
    kind = "DimensionMismatch"


class MalformedFileError(PicError, ValueError):
    kind = "MalformedFile"


class InsufficientDataError(PicError, ValueError):
    kind = "InsufficientData"


class PolicySyntaxError(PicError, ValueError):
    kind = "PolicySyntax"


class AuthorizationError(PicError, PermissionError):
    kind = "Authorization"


class AuthenticationError(PicError):
    kind = "Authentication"


class ProtocolError(PicError, RuntimeError):
    kind = "Protocol"


class ConfigError(PicError, ValueError):
    kind = "Config"
