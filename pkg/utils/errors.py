"""
Exception types shared by the BTF modules.

Every error derives from BtfError, which is a ValueError so callers that
already guard input validation with ``except ValueError`` keep working.
"""


class BtfError(ValueError):
    """Base class for all BTF errors."""


class InvalidParams(BtfError):
    """Parameter set is unknown or internally inconsistent."""


class DimensionMismatch(BtfError):
    """Ciphertexts or keys belong to different LWE dimensions."""


class LengthMismatch(BtfError):
    """Bit vectors or ciphertext vectors have different lengths."""


class ExhaustedPublicKey(BtfError):
    """No unconsumed sample remains in a public key set."""


class UnsupportedLevel(BtfError):
    """Requested symmetric security level is not offered by Trivium."""


class WidthMismatch(BtfError):
    """Encrypted counter is too narrow for the plaintext threshold."""


class ChannelViolation(BtfError):
    """An artifact was sent on a channel the model does not allow."""


class PrivacyViolation(BtfError):
    """A party tried to store a secret its role must never hold."""


class MissingKey(BtfError):
    """A phase ran before the key material it depends on was present."""


class NoTemplate(BtfError):
    """Verification requested for a client with no stored template."""


class IncompleteRun(BtfError):
    """A report was requested over ledgers that do not cover the setup stage."""


class FramingError(BtfError):
    """Malformed wire frame or serialized blob."""


class AuthenticationError(BtfError):
    """MAC check failed on a secure-channel frame."""
