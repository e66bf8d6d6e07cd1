"""Minimal JSON-RPC 2.0 surface for the tool bridge.

Request/response objects are bit-exact per the JSON-RPC 2.0 spec. Two
transports: an in-process server object, and a framed byte stream reusing
the same 4-byte length prefix as the main wire format.
"""

from __future__ import annotations

from typing import Any, Callable, Optional

from .canonical import canonical_decode, canonical_encode
from .errors import FrameError

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603


def request(method: str, params: Any, call_id: str) -> dict[str, Any]:
    return {"jsonrpc": "2.0", "id": call_id, "method": method, "params": params}


def result_response(call_id: str, result: Any) -> dict[str, Any]:
    return {"jsonrpc": "2.0", "id": call_id, "result": result}


def error_response(call_id: Optional[str], code: int, message: str) -> dict[str, Any]:
    return {"jsonrpc": "2.0", "id": call_id, "error": {"code": code, "message": message}}


class StubToolServer:
    """In-process tool server answering ``tools/call`` requests.

    Tools are plain callables over an arguments dict. The call log keeps
    (call id, tool name) pairs so tests can assert correlation and that
    rejected mail never reached the server.
    """

    def __init__(self):
        self._tools: dict[str, Callable[[dict[str, Any]], Any]] = {}
        self.calls: list[tuple[str, str]] = []
        self.respond = True  # scripted silence for timeout tests

    def register_tool(self, name: str, fn: Callable[[dict[str, Any]], Any]) -> None:
        self._tools[name] = fn

    def handle(self, req: dict[str, Any]) -> Optional[dict[str, Any]]:
        if not self.respond:
            return None
        call_id = req.get("id")
        if req.get("jsonrpc") != "2.0" or "method" not in req:
            return error_response(call_id, INVALID_REQUEST, "not a JSON-RPC 2.0 request")
        if req["method"] != "tools/call":
            return error_response(call_id, METHOD_NOT_FOUND, f"unknown method {req['method']!r}")
        params = req.get("params") or {}
        name = params.get("name")
        fn = self._tools.get(name)
        if fn is None:
            return error_response(call_id, METHOD_NOT_FOUND, f"unknown tool {name!r}")
        try:
            result = fn(params.get("arguments") or {})
        except Exception as exc:
            return error_response(call_id, INTERNAL_ERROR, str(exc))
        self.calls.append((call_id, name))
        return result_response(call_id, result)


def builtin_tool_server() -> StubToolServer:
    """The stock stub: arithmetic, echo, and a tiny code-search corpus."""
    server = StubToolServer()
    server.register_tool("add", lambda args: args["a"] + args["b"])
    server.register_tool("echo", lambda args: args)

    corpus = {
        "auth": ["auth/login.py: def login(user, secret)", "auth/session.py: class SessionToken"],
        "billing": ["billing/invoice.py: def issue_invoice(order)"],
    }

    def search(args: dict[str, Any]) -> list[str]:
        query = str(args.get("query", "")).lower()
        hits = [line for key, lines in corpus.items() if query in key for line in lines]
        if not hits:
            hits = [line for lines in corpus.values() for line in lines if query in line.lower()]
        return hits

    server.register_tool("search", search)
    return server


# ---------------------------------------------------------------------------
# Framed byte-stream binding (shares the 4-byte big-endian length prefix)
# ---------------------------------------------------------------------------

MAX_RPC_FRAME = 16 * 1024 * 1024


def rpc_frame_encode(message: dict[str, Any]) -> bytes:
    body = canonical_encode(message)
    if len(body) > MAX_RPC_FRAME:
        raise FrameError("JSON-RPC frame exceeds 16 MiB")
    return len(body).to_bytes(4, "big") + body


class RpcFrameDecoder:
    """Incremental decoder; feed() arbitrary chunks, drain complete messages."""

    def __init__(self):
        self._buffer = bytearray()

    def feed(self, data: bytes) -> list[dict[str, Any]]:
        self._buffer.extend(data)
        messages = []
        while True:
            if len(self._buffer) < 4:
                break
            length = int.from_bytes(self._buffer[:4], "big")
            if length > MAX_RPC_FRAME:
                raise FrameError(f"declared JSON-RPC frame length {length} exceeds 16 MiB")
            if len(self._buffer) < 4 + length:
                break
            body = bytes(self._buffer[4 : 4 + length])
            del self._buffer[: 4 + length]
            messages.append(canonical_decode(body))
        return messages


class StreamToolServer:
    """Byte-stream face over a StubToolServer: frames in, frames out."""

    def __init__(self, server: StubToolServer):
        self.server = server
        self._decoder = RpcFrameDecoder()

    def feed(self, data: bytes) -> bytes:
        out = bytearray()
        for message in self._decoder.feed(data):
            response = self.server.handle(message)
            if response is not None:
                out.extend(rpc_frame_encode(response))
        return bytes(out)


class StreamRpcClient:
    """Client half of the framed binding; pairs with StreamToolServer."""

    def __init__(self, server: StreamToolServer):
        self.server = server
        self._decoder = RpcFrameDecoder()

    def call(self, method: str, params: Any, call_id: str,
             chunk_size: Optional[int] = None) -> Optional[dict[str, Any]]:
        wire = rpc_frame_encode(request(method, params, call_id))
        responses = []
        if chunk_size:
            for i in range(0, len(wire), chunk_size):
                responses.extend(self._decoder.feed(self.server.feed(wire[i : i + chunk_size])))
        else:
            responses.extend(self._decoder.feed(self.server.feed(wire)))
        for response in responses:
            if response.get("id") == call_id:
                return response
        return responses[0] if responses else None
