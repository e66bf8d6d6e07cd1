"""The signed (optionally encrypted) mail envelope.

Encrypt-then-sign: the signature covers the envelope with the ciphertext in
place, so any router can verify sender authenticity without decrypting.
Binary fields serialize as lowercase hex inside canonical JSON.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from typing import Any, Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ed25519, x25519
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .canonical import canonical_encode
from .errors import AddressMismatchError, CryptoError, DecryptionError, EncodingError
from .identity import EntityAddress, EntityCard, KeyMaterial

HKDF_INFO = b"fp-envelope-v1"
MAX_PAYLOAD_BYTES = 16 * 1024 * 1024  # envelope bodies must fit one frame

# Message-type vocabulary. Intents are open strings on the wire; these are
# the ones the runtime itself understands.
CHAT = "CHAT"
INVOKE = "INVOKE"
PAYMENT = "PAYMENT"
RECEIPT = "RECEIPT"
ERROR = "ERROR"
PING = "PING"
PONG = "PONG"
DISCOVER = "DISCOVER"
DISCOVERY_DOC = "DISCOVERY_DOC"
APPROVAL_REQUEST = "APPROVAL_REQUEST"
APPROVAL_RESPONSE = "APPROVAL_RESPONSE"
CONTRACT_PROPOSE = "CONTRACT_PROPOSE"
CONTRACT_AMEND = "CONTRACT_AMEND"
CONTRACT_APPROVE = "CONTRACT_APPROVE"
CONTRACT_ACTIVATE = "CONTRACT_ACTIVATE"
CONTRACT_COMPLETE = "CONTRACT_COMPLETE"
CONTRACT_REWORK = "CONTRACT_REWORK"
CONTRACT_ACCEPT = "CONTRACT_ACCEPT"
CONTRACT_SETTLE = "CONTRACT_SETTLE"
CONTRACT_CANCEL = "CONTRACT_CANCEL"
CONTRACT_DISPUTE = "CONTRACT_DISPUTE"
CONTRACT_RESOLVE = "CONTRACT_RESOLVE"


@dataclass(frozen=True)
class CipherPayload:
    """Ephemeral X25519 + AES-256-GCM payload; tag failure is a hard error."""

    ephemeral_public: bytes
    nonce: bytes
    ciphertext: bytes

    def to_record(self) -> dict[str, Any]:
        return {
            "kind": "cipher",
            "ephemeral_public": self.ephemeral_public.hex(),
            "nonce": self.nonce.hex(),
            "ciphertext": self.ciphertext.hex(),
        }

    def byte_size(self) -> int:
        return len(self.ciphertext)


@dataclass(frozen=True)
class PlainPayload:
    data: bytes

    def to_record(self) -> dict[str, Any]:
        return {"kind": "plain", "data": self.data.hex()}

    def byte_size(self) -> int:
        return len(self.data)


Payload = Union[PlainPayload, CipherPayload]


def payload_from_record(record: dict[str, Any]) -> Payload:
    kind = record.get("kind")
    if kind == "plain":
        return PlainPayload(bytes.fromhex(record["data"]))
    if kind == "cipher":
        return CipherPayload(
            ephemeral_public=bytes.fromhex(record["ephemeral_public"]),
            nonce=bytes.fromhex(record["nonce"]),
            ciphertext=bytes.fromhex(record["ciphertext"]),
        )
    raise EncodingError(f"unknown payload kind {kind!r}")


@dataclass(frozen=True)
class Envelope:
    """Signed mail wrapper: intent, routing, correlation, and policy refs.

    ``signature`` is Ed25519 by the sender over the canonical bytes of every
    other field; ``sent_at`` is a logical-millisecond timestamp.
    """

    envelope_id: bytes
    sender: EntityAddress
    recipient: EntityAddress
    intent: str
    sent_at: int
    payload: Payload
    session_id: bytes | None = None
    correlation_id: bytes | None = None
    policy_ref: str | None = None
    signature: bytes | None = None

    def __post_init__(self):
        if len(self.envelope_id) != 16:
            raise EncodingError("envelope_id must be 16 bytes")
        if self.payload.byte_size() > MAX_PAYLOAD_BYTES:
            raise EncodingError("payload exceeds maximum envelope size")

    def _unsigned_record(self) -> dict[str, Any]:
        return {
            "envelope_id": self.envelope_id.hex(),
            "sender": str(self.sender),
            "recipient": str(self.recipient),
            "intent": self.intent,
            "session_id": self.session_id.hex() if self.session_id else None,
            "correlation_id": self.correlation_id.hex() if self.correlation_id else None,
            "policy_ref": self.policy_ref,
            "sent_at": self.sent_at,
            "payload": self.payload.to_record(),
        }

    def signing_bytes(self) -> bytes:
        return canonical_encode(self._unsigned_record())

    def to_record(self) -> dict[str, Any]:
        record = self._unsigned_record()
        record["signature"] = self.signature.hex() if self.signature else None
        return record

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "Envelope":
        try:
            return cls(
                envelope_id=bytes.fromhex(record["envelope_id"]),
                sender=EntityAddress.parse(record["sender"]),
                recipient=EntityAddress.parse(record["recipient"]),
                intent=record["intent"],
                session_id=bytes.fromhex(record["session_id"]) if record.get("session_id") else None,
                correlation_id=bytes.fromhex(record["correlation_id"]) if record.get("correlation_id") else None,
                policy_ref=record.get("policy_ref"),
                sent_at=int(record["sent_at"]),
                payload=payload_from_record(record["payload"]),
                signature=bytes.fromhex(record["signature"]) if record.get("signature") else None,
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise EncodingError(f"malformed envelope record: {exc}") from exc

    def canonical_bytes(self) -> bytes:
        return canonical_encode(self.to_record())

    def plaintext(self, keys: KeyMaterial | None = None) -> bytes:
        """Payload bytes; decrypts with ``keys`` when the payload is ciphered."""
        if isinstance(self.payload, PlainPayload):
            return self.payload.data
        if keys is None:
            raise DecryptionError("payload is encrypted and no keys were supplied")
        return decrypt_payload(self.payload, keys)


def sign_envelope(env: Envelope, keys: KeyMaterial) -> Envelope:
    """Attach the sender's Ed25519 signature over the canonical header+payload."""
    signature = keys.signing_key().sign(env.signing_bytes())
    return replace(env, signature=signature)


def verify_envelope(env: Envelope, sender_card: EntityCard) -> bool:
    """True iff the signature verifies under the card's signing key.

    An address mismatch between card and envelope is an error, distinct from
    a plain verification failure.
    """
    if sender_card.address != env.sender:
        raise AddressMismatchError(
            f"card is for {sender_card.address}, envelope sender is {env.sender}"
        )
    if env.signature is None or len(env.signature) != 64:
        return False
    public = ed25519.Ed25519PublicKey.from_public_bytes(sender_card.signing_public)
    try:
        public.verify(env.signature, env.signing_bytes())
        return True
    except InvalidSignature:
        return False


def _derive_key(shared: bytes) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=HKDF_INFO).derive(shared)


def encrypt_payload(plaintext: bytes, recipient_card: EntityCard) -> CipherPayload:
    """Encrypt for the card's holder with a fresh ephemeral key per call."""
    if not plaintext:
        raise CryptoError("refusing to encrypt an empty payload")
    if len(plaintext) > MAX_PAYLOAD_BYTES:
        raise CryptoError("plaintext exceeds maximum envelope size")
    ephemeral = x25519.X25519PrivateKey.generate()
    recipient_public = x25519.X25519PublicKey.from_public_bytes(recipient_card.encryption_public)
    key = _derive_key(ephemeral.exchange(recipient_public))
    nonce = os.urandom(12)
    ciphertext = AESGCM(key).encrypt(nonce, plaintext, None)
    ephemeral_public = ephemeral.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    return CipherPayload(ephemeral_public=ephemeral_public, nonce=nonce, ciphertext=ciphertext)


def decrypt_payload(cp: CipherPayload, keys: KeyMaterial) -> bytes:
    """Recover plaintext; wrong recipient and tampering fail identically."""
    try:
        ephemeral_public = x25519.X25519PublicKey.from_public_bytes(cp.ephemeral_public)
        key = _derive_key(keys.encryption_key().exchange(ephemeral_public))
        return AESGCM(key).decrypt(cp.nonce, cp.ciphertext, None)
    except Exception as exc:
        raise DecryptionError("payload authentication failed") from exc
