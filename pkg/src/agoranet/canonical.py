"""Canonical JSON encoding: the single byte representation used for signing,
hashing, and wire bodies.

Rules: object keys sorted by UTF-8 byte order, no insignificant whitespace,
integers in shortest decimal form, strings minimally escaped, floats in
shortest round-trip decimal, non-finite numbers rejected. The encoder is
hand-rolled rather than delegating to json.dumps so the error surface and the
escaping rules stay pinned down; decoding reuses the stdlib parser.
"""

from __future__ import annotations

import json
import math
from typing import Any

from .errors import EncodingError

_ESCAPES = {
    "\\": "\\\\",
    '"': '\\"',
    "\b": "\\b",
    "\f": "\\f",
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
}


def _encode_string(s: str, out: list[str]) -> None:
    out.append('"')
    for ch in s:
        esc = _ESCAPES.get(ch)
        if esc is not None:
            out.append(esc)
        elif ch < "\x20":
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')


def _encode(value: Any, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        if not math.isfinite(value):
            raise EncodingError("non-finite numbers are not encodable")
        out.append(repr(value))  # shortest round-trip decimal
    elif isinstance(value, str):
        _encode_string(value, out)
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _encode(item, out)
        out.append("]")
    elif isinstance(value, dict):
        keys = []
        for k in value:
            if not isinstance(k, str):
                raise EncodingError(f"object keys must be strings, got {type(k).__name__}")
            keys.append(k)
        # Sort by UTF-8 bytes; for str this equals code-point order.
        keys.sort(key=lambda k: k.encode("utf-8"))
        out.append("{")
        for i, k in enumerate(keys):
            if i:
                out.append(",")
            _encode_string(k, out)
            out.append(":")
            _encode(value[k], out)
        out.append("}")
    else:
        raise EncodingError(f"value of type {type(value).__name__} is not encodable")


def canonical_encode(value: Any) -> bytes:
    """Encode a structured record to its canonical UTF-8 byte form."""
    out: list[str] = []
    _encode(value, out)
    return "".join(out).encode("utf-8")


def canonical_decode(data: bytes | str) -> Any:
    """Parse canonical (or any) JSON bytes back into Python structures."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        value = json.loads(data)
    except ValueError as exc:
        raise EncodingError(f"malformed JSON: {exc}") from exc
    return value
