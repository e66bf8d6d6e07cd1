"""Exception types shared across the runtime.

Every error carries a machine-readable ``code`` so CLI and wire surfaces can
report structured failures; human text goes in the message.
"""

from __future__ import annotations


class AgoranetError(Exception):
    """Base class; ``code`` is a stable machine-readable reason."""

    code = "ERROR"

    def __init__(self, message: str, *, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class EncodingError(AgoranetError):
    code = "ENCODING"


class AddressError(AgoranetError):
    code = "BAD_ADDRESS"


class CardError(AgoranetError):
    code = "BAD_CARD"


class SignatureError(AgoranetError):
    code = "BAD_SIGNATURE"


class AddressMismatchError(SignatureError):
    """Card presented for verification does not belong to the sender."""

    code = "ADDRESS_MISMATCH"


class CryptoError(AgoranetError):
    code = "CRYPTO"


class DecryptionError(CryptoError):
    """Authentication failure or wrong recipient; indistinguishable by design."""

    code = "DECRYPT_FAILED"


class RegistrationError(AgoranetError):
    code = "REGISTRATION"


class TopologyError(AgoranetError):
    code = "TOPOLOGY"


class DeliveryError(AgoranetError):
    code = "DELIVERY"


class FrameError(AgoranetError):
    code = "BAD_FRAME"


class ApprovalError(AgoranetError):
    code = "APPROVAL"


class SessionError(AgoranetError):
    code = "SESSION"


class WrongStateError(AgoranetError):
    code = "WRONG_STATE"


class ContractError(AgoranetError):
    code = "CONTRACT"


class LedgerError(AgoranetError):
    code = "LEDGER"


class InsufficientFundsError(LedgerError):
    code = "INSUFFICIENT_FUNDS"


class ReputationError(AgoranetError):
    code = "REPUTATION"


class HandlerError(AgoranetError):
    code = "HANDLER"


class ScenarioError(AgoranetError):
    code = "SCENARIO"


class CliError(AgoranetError):
    code = "CLI"
