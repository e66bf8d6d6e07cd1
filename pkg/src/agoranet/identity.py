"""Cryptographic identity: key material, addresses, entity kinds, and cards."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any

from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ed25519, x25519

from .canonical import canonical_encode
from .errors import AddressError, CardError, CryptoError

_HEX8 = frozenset("0123456789abcdef")

MAX_NAME_BYTES = 128
MAX_SUMMARY_BYTES = 512


def _raw_public(key) -> bytes:
    return key.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)


def _raw_private(key) -> bytes:
    return key.private_bytes(
        serialization.Encoding.Raw,
        serialization.PrivateFormat.Raw,
        serialization.NoEncryption(),
    )


@dataclass(frozen=True)
class KeyMaterial:
    """Ed25519 signing pair plus X25519 encryption pair.

    Immutable after creation; secrets never leave this object through any
    card or envelope serialization.
    """

    signing_secret: bytes
    signing_public: bytes
    encryption_secret: bytes
    encryption_public: bytes

    def signing_key(self) -> ed25519.Ed25519PrivateKey:
        return ed25519.Ed25519PrivateKey.from_private_bytes(self.signing_secret)

    def encryption_key(self) -> x25519.X25519PrivateKey:
        return x25519.X25519PrivateKey.from_private_bytes(self.encryption_secret)


def generate_identity(seed: bytes | None = None) -> KeyMaterial:
    """Create a fresh identity, deterministically when a 32-byte seed is given.

    The signing secret is the seed itself (standard Ed25519 seed form); the
    encryption secret is SHA-256(seed || "/encryption") so one seed yields
    both pairs.
    """
    if seed is None:
        sign_secret = os.urandom(32)
        enc_secret = os.urandom(32)
    else:
        if len(seed) != 32:
            raise CryptoError(f"seed must be 32 bytes, got {len(seed)}")
        sign_secret = bytes(seed)
        enc_secret = hashlib.sha256(sign_secret + b"/encryption").digest()

    sign_key = ed25519.Ed25519PrivateKey.from_private_bytes(sign_secret)
    enc_key = x25519.X25519PrivateKey.from_private_bytes(enc_secret)
    return KeyMaterial(
        signing_secret=sign_secret,
        signing_public=_raw_public(sign_key.public_key()),
        encryption_secret=enc_secret,
        encryption_public=_raw_public(enc_key.public_key()),
    )


def _check_uid(uid: str, label: str) -> str:
    if len(uid) != 8 or not set(uid) <= _HEX8:
        raise AddressError(f"{label} must be 8 lowercase hex chars, got {uid!r}")
    return uid


@dataclass(frozen=True, order=True)
class EntityAddress:
    """Globally unique `host_uid:entity_uid` address (8+8 lowercase hex)."""

    host_uid: str
    entity_uid: str

    def __post_init__(self):
        _check_uid(self.host_uid, "host_uid")
        _check_uid(self.entity_uid, "entity_uid")

    def __str__(self) -> str:
        return f"{self.host_uid}:{self.entity_uid}"

    @classmethod
    def parse(cls, text: str) -> "EntityAddress":
        if len(text) != 17 or text[8] != ":":
            raise AddressError(f"address must be 'hhhhhhhh:eeeeeeee', got {text!r}")
        return cls(text[:8], text[9:])


class EntityKind(str, Enum):
    HOST = "host"
    HUMAN = "human"
    AGENT = "agent"
    TOOL = "tool"
    RESOURCE = "resource"
    SERVICE = "service"
    ARBITER = "arbiter"
    ORGANIZATION = "organization"

    @classmethod
    def parse(cls, text: str) -> "EntityKind":
        try:
            return cls(text)
        except ValueError:
            raise CardError(f"unknown entity kind {text!r}") from None


@dataclass(frozen=True)
class EntityCard:
    """Public discovery document for one entity.

    Carries only public material: the capability summary is the short
    progressive-disclosure blurb, never a full schema.
    """

    name: str
    address: EntityAddress
    kind: EntityKind
    signing_public: bytes
    encryption_public: bytes
    discoverable: bool = True
    capability_summary: str | None = None

    def __post_init__(self):
        if len(self.name.encode("utf-8")) > MAX_NAME_BYTES:
            raise CardError(f"name exceeds {MAX_NAME_BYTES} UTF-8 bytes")
        if len(self.signing_public) != 32 or len(self.encryption_public) != 32:
            raise CardError("public keys must be 32 bytes")
        if self.capability_summary is not None:
            if len(self.capability_summary.encode("utf-8")) > MAX_SUMMARY_BYTES:
                raise CardError(f"capability_summary exceeds {MAX_SUMMARY_BYTES} UTF-8 bytes")

    def to_record(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "address": str(self.address),
            "kind": self.kind.value,
            "signing_public": self.signing_public.hex(),
            "encryption_public": self.encryption_public.hex(),
            "discoverable": self.discoverable,
            "capability_summary": self.capability_summary,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "EntityCard":
        try:
            return cls(
                name=record["name"],
                address=EntityAddress.parse(record["address"]),
                kind=EntityKind.parse(record["kind"]),
                signing_public=bytes.fromhex(record["signing_public"]),
                encryption_public=bytes.fromhex(record["encryption_public"]),
                discoverable=bool(record["discoverable"]),
                capability_summary=record.get("capability_summary"),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise CardError(f"malformed entity card: {exc}") from exc

    def canonical_bytes(self) -> bytes:
        return canonical_encode(self.to_record())

    def with_summary(self, summary: str) -> "EntityCard":
        return replace(self, capability_summary=summary)


def card_for(
    name: str,
    address: EntityAddress,
    kind: EntityKind,
    keys: KeyMaterial,
    *,
    discoverable: bool = True,
    capability_summary: str | None = None,
) -> EntityCard:
    return EntityCard(
        name=name,
        address=address,
        kind=kind,
        signing_public=keys.signing_public,
        encryption_public=keys.encryption_public,
        discoverable=discoverable,
        capability_summary=capability_summary,
    )


def card_fingerprint(card: EntityCard) -> bytes:
    """SHA-256 over the card's canonical bytes; changes iff any field changes."""
    return hashlib.sha256(card.canonical_bytes()).digest()
