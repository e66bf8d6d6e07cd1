"""Canonical encoding tests, checked against a second minimal canonicalizer."""

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from agoranet.canonical import canonical_decode, canonical_encode
from agoranet.errors import EncodingError


def oracle_encode(value) -> bytes:
    """Independent canonicalizer: stdlib json with pinned options."""
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def test_key_sorting():
    assert canonical_encode({"b": 1, "a": 2}) == b'{"a":2,"b":1}'


def test_empty_object():
    assert canonical_encode({}) == b"{}"


def test_nested_envelope_header_matches_oracle():
    header = {
        "envelope_id": "00112233445566778899aabbccddeeff",
        "sender": "a1b2c3d4:0badcafe",
        "recipient": "a1b2c3d4:deadbeef",
        "intent": "CHAT",
        "session_id": None,
        "correlation_id": None,
        "policy_ref": "org/policy-1",
        "sent_at": 1234,
        "payload": {"kind": "plain", "data": "70696e67"},
    }
    assert canonical_encode(header) == oracle_encode(header)


@pytest.mark.parametrize(
    "value",
    [
        {},
        [],
        {"z": [1, 2, {"y": None, "x": True}], "a": "text"},
        {"unicode": "héllo ☃", "esc": 'quote " back \\ tab \t nl \n'},
        {"num": 0, "neg": -17, "big": 2**62, "f": 0.5, "g": -1.25e-5},
        [True, False, None, "", {"": ""}],
    ],
)
def test_matches_oracle(value):
    assert canonical_encode(value) == oracle_encode(value)


@given(
    st.recursive(
        st.none()
        | st.booleans()
        | st.integers(min_value=-(2**53), max_value=2**53)
        | st.floats(allow_nan=False, allow_infinity=False)
        | st.text(),
        lambda children: st.lists(children, max_size=4)
        | st.dictionaries(st.text(), children, max_size=4),
        max_leaves=20,
    )
)
def test_agrees_with_oracle_and_reencodes(value):
    encoded = canonical_encode(value)
    assert encoded == oracle_encode(value)
    # Idempotence under parse -> re-encode.
    assert canonical_encode(canonical_decode(encoded)) == encoded


def test_field_order_insensitive():
    a = {"one": 1, "two": {"x": [1], "y": 2}}
    b = {"two": {"y": 2, "x": [1]}, "one": 1}
    assert canonical_encode(a) == canonical_encode(b)


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), -float("inf")])
def test_rejects_non_finite(bad):
    with pytest.raises(EncodingError):
        canonical_encode({"v": bad})


def test_rejects_non_string_keys_and_unknown_types():
    with pytest.raises(EncodingError):
        canonical_encode({1: "x"})
    with pytest.raises(EncodingError):
        canonical_encode({"v": object()})


def test_control_chars_escaped():
    assert canonical_encode("\x01") == b'"\\u0001"'
    assert canonical_encode("\n") == b'"\\n"'


def test_decode_rejects_malformed():
    with pytest.raises(EncodingError):
        canonical_decode(b'{"open": ')


def test_key_order_is_utf8_byte_order():
    # "é" (0xc3a9) sorts after every ASCII key under byte order.
    value = {"é": 1, "z": 2, "a": 3}
    assert canonical_encode(value) == '{"a":3,"z":2,"é":1}'.encode("utf-8")
