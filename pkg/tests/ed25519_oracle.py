"""Independent pure-Python Ed25519 oracle (textbook RFC 8032 arithmetic).

Deliberately slow and dependency-free: used only to derive expected public
keys and signatures for the crypto tests. Not part of the package.
"""

import hashlib

q = 2**255 - 19
L = 2**252 + 27742317777372353535851937790883648493


def _inv(x: int) -> int:
    return pow(x, q - 2, q)


d = (-121665 * _inv(121666)) % q
I = pow(2, (q - 1) // 4, q)


def _xrecover(y: int) -> int:
    xx = (y * y - 1) * _inv(d * y * y + 1)
    x = pow(xx, (q + 3) // 8, q)
    if (x * x - xx) % q != 0:
        x = (x * I) % q
    if x % 2 != 0:
        x = q - x
    return x


_By = (4 * _inv(5)) % q
_Bx = _xrecover(_By)
_B = (_Bx, _By)


def _edwards(P, Q):
    x1, y1 = P
    x2, y2 = Q
    x3 = (x1 * y2 + x2 * y1) * _inv(1 + d * x1 * x2 * y1 * y2)
    y3 = (y1 * y2 + x1 * x2) * _inv(1 - d * x1 * x2 * y1 * y2)
    return (x3 % q, y3 % q)


def _scalarmult(P, e: int):
    Q = (0, 1)
    while e > 0:
        if e & 1:
            Q = _edwards(Q, P)
        P = _edwards(P, P)
        e >>= 1
    return Q


def _encodepoint(P) -> bytes:
    x, y = P
    n = y | ((x & 1) << 255)
    return n.to_bytes(32, "little")


def _clamped_scalar(h: bytes) -> int:
    a = int.from_bytes(h[:32], "little")
    a &= (1 << 254) - 8
    a |= 1 << 254
    return a


def publickey(seed: bytes) -> bytes:
    h = hashlib.sha512(seed).digest()
    a = _clamped_scalar(h)
    return _encodepoint(_scalarmult(_B, a))


def signature(message: bytes, seed: bytes) -> bytes:
    h = hashlib.sha512(seed).digest()
    a = _clamped_scalar(h)
    pk = _encodepoint(_scalarmult(_B, a))
    r = int.from_bytes(hashlib.sha512(h[32:] + message).digest(), "little") % L
    R = _encodepoint(_scalarmult(_B, r))
    k = int.from_bytes(hashlib.sha512(R + pk + message).digest(), "little") % L
    s = (r + k * a) % L
    return R + s.to_bytes(32, "little")
