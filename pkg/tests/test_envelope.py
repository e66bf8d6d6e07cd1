import random

import pytest

from agoranet.envelope import (
    CHAT,
    CipherPayload,
    Envelope,
    PlainPayload,
    decrypt_payload,
    encrypt_payload,
    sign_envelope,
    verify_envelope,
)
from agoranet.errors import AddressMismatchError, CryptoError, DecryptionError
from agoranet.identity import EntityAddress, EntityKind, card_for, generate_identity

from ed25519_oracle import signature as oracle_signature

ALICE_SEED = bytes(range(32))
BOB_SEED = bytes(range(1, 33))


def _identity(seed, uid, name, kind=EntityKind.HUMAN):
    keys = generate_identity(seed)
    addr = EntityAddress.parse(f"a1b2c3d4:{uid}")
    return keys, card_for(name, addr, kind, keys)


@pytest.fixture
def alice():
    return _identity(ALICE_SEED, "00000001", "Alice")


@pytest.fixture
def bob():
    return _identity(BOB_SEED, "00000002", "Bob")


def _envelope(sender_card, recipient_card, payload=b"hi", **kw):
    return Envelope(
        envelope_id=kw.pop("envelope_id", bytes(16)),
        sender=sender_card.address,
        recipient=recipient_card.address,
        intent=kw.pop("intent", CHAT),
        sent_at=kw.pop("sent_at", 1000),
        payload=PlainPayload(payload),
        **kw,
    )


def test_sign_verify_round_trip(alice, bob):
    keys, card = alice
    env = sign_envelope(_envelope(card, bob[1]), keys)
    assert verify_envelope(env, card) is True


def test_tampered_payload_fails(alice, bob):
    keys, card = alice
    env = sign_envelope(_envelope(card, bob[1], payload=b"pay me 5"), keys)
    forged = Envelope.from_record({**env.to_record(), "payload": PlainPayload(b"pay me 9").to_record()})
    assert verify_envelope(forged, card) is False


def test_altered_sent_at_fails(alice, bob):
    keys, card = alice
    env = sign_envelope(_envelope(card, bob[1]), keys)
    forged = Envelope.from_record({**env.to_record(), "sent_at": env.sent_at + 1})
    assert verify_envelope(forged, card) is False


def test_wrong_card_is_address_mismatch(alice, bob):
    keys, card = alice
    env = sign_envelope(_envelope(card, bob[1]), keys)
    with pytest.raises(AddressMismatchError):
        verify_envelope(env, bob[1])


def test_signature_matches_independent_signer(alice, bob):
    keys, card = alice
    env = _envelope(card, bob[1], payload=b"fixed")
    signed = sign_envelope(env, keys)
    assert signed.signature == oracle_signature(env.signing_bytes(), ALICE_SEED)


def test_single_bit_mutations_break_verification(alice, bob):
    keys, card = alice
    rng = random.Random(7)
    for _ in range(50):
        payload = rng.randbytes(rng.randint(1, 64))
        env = sign_envelope(_envelope(card, bob[1], payload=payload), keys)
        record = env.to_record()
        data = bytearray(bytes.fromhex(record["payload"]["data"]))
        bit = rng.randrange(len(data) * 8)
        data[bit // 8] ^= 1 << (bit % 8)
        forged = Envelope.from_record(
            {**record, "payload": {"kind": "plain", "data": bytes(data).hex()}}
        )
        assert verify_envelope(forged, card) is False


def test_encrypt_decrypt_round_trip(alice, bob):
    rng = random.Random(11)
    for _ in range(20):
        plaintext = rng.randbytes(rng.randint(1, 512))
        cp = encrypt_payload(plaintext, bob[1])
        assert decrypt_payload(cp, bob[0]) == plaintext


def test_encryption_uses_fresh_ephemerals(bob):
    a = encrypt_payload(b"same words", bob[1])
    b = encrypt_payload(b"same words", bob[1])
    assert a.ciphertext != b.ciphertext
    assert a.ephemeral_public != b.ephemeral_public


def test_tampered_tag_fails(bob):
    cp = encrypt_payload(b"secret", bob[1])
    bad = CipherPayload(cp.ephemeral_public, cp.nonce, cp.ciphertext[:-1] + bytes([cp.ciphertext[-1] ^ 1]))
    with pytest.raises(DecryptionError):
        decrypt_payload(bad, bob[0])


def test_wrong_recipient_fails(alice, bob):
    cp = encrypt_payload(b"secret", bob[1])
    with pytest.raises(DecryptionError):
        decrypt_payload(cp, alice[0])


def test_empty_plaintext_rejected(bob):
    with pytest.raises(CryptoError):
        encrypt_payload(b"", bob[1])


def test_encrypted_envelope_signs_over_ciphertext(alice, bob):
    keys, card = alice
    cp = encrypt_payload(b"for bob only", bob[1])
    env = Envelope(
        envelope_id=bytes(16),
        sender=card.address,
        recipient=bob[1].address,
        intent=CHAT,
        sent_at=1,
        payload=cp,
    )
    signed = sign_envelope(env, keys)
    assert verify_envelope(signed, card) is True
    assert signed.plaintext(bob[0]) == b"for bob only"


def test_record_round_trip(alice, bob):
    keys, card = alice
    env = sign_envelope(
        _envelope(card, bob[1], session_id=b"s" * 16, correlation_id=b"c" * 16, policy_ref="p1"),
        keys,
    )
    again = Envelope.from_record(env.to_record())
    assert again == env
    assert again.canonical_bytes() == env.canonical_bytes()


def test_no_secrets_in_envelope_serialization(alice, bob):
    keys, card = alice
    env = sign_envelope(_envelope(card, bob[1]), keys)
    blob = env.canonical_bytes()
    assert keys.signing_secret.hex().encode() not in blob
    assert keys.encryption_secret.hex().encode() not in blob
