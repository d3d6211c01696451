"""Deterministic ECDSA over the package's curve stack.

Signing hashes the message with SHA-256, draws the nonce with the
RFC 6979 HMAC-DRBG (so identical inputs give identical signatures),
and emits a raw ``r || s`` signature with the low-s normalization.
Public keys travel in compressed form.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field
from random import Random

from crossrelay.crypto.curve import (
    SECP256K1,
    CurveError,
    CurveParams,
    decode_point,
    encode_point,
)


class SigningError(ValueError):
    """Raised on invalid key material."""


@dataclass(frozen=True)
class SigningKeypair:
    """Private scalar plus compressed public point."""

    curve: CurveParams
    private: int = field(repr=False)
    public: bytes

    def __repr__(self) -> str:
        return f"SigningKeypair(curve={self.curve.name!r}, public={self.public.hex()})"

    @classmethod
    def generate(cls, rng: Random, curve: CurveParams = SECP256K1) -> "SigningKeypair":
        return cls.from_private(rng.randrange(1, curve.n), curve)

    @classmethod
    def from_private(cls, private: int, curve: CurveParams = SECP256K1) -> "SigningKeypair":
        if not 0 < private < curve.n:
            raise SigningError("private scalar out of range")
        return cls(curve=curve, private=private, public=encode_point(curve, curve.mul_base(private)))


def _digest_to_int(digest: bytes, n: int) -> int:
    value = int.from_bytes(digest, "big")
    excess = len(digest) * 8 - n.bit_length()
    if excess > 0:
        value >>= excess
    return value


def _rfc6979_nonce(private: int, digest: bytes, curve: CurveParams) -> int:
    """Deterministic nonce per RFC 6979 with HMAC-SHA256."""
    qlen = curve.scalar_size
    h1 = _digest_to_int(digest, curve.n) % curve.n
    key_bytes = private.to_bytes(qlen, "big")
    h1_bytes = h1.to_bytes(qlen, "big")
    v = b"\x01" * 32
    k = b"\x00" * 32
    k = hmac.new(k, v + b"\x00" + key_bytes + h1_bytes, hashlib.sha256).digest()
    v = hmac.new(k, v, hashlib.sha256).digest()
    k = hmac.new(k, v + b"\x01" + key_bytes + h1_bytes, hashlib.sha256).digest()
    v = hmac.new(k, v, hashlib.sha256).digest()
    while True:
        t = b""
        while len(t) < qlen:
            v = hmac.new(k, v, hashlib.sha256).digest()
            t += v
        candidate = _digest_to_int(t[:qlen], curve.n)
        if 0 < candidate < curve.n:
            return candidate
        k = hmac.new(k, v + b"\x00", hashlib.sha256).digest()
        v = hmac.new(k, v, hashlib.sha256).digest()


def sign(keypair: SigningKeypair, message: bytes) -> bytes:
    """Sign sha256(message); returns r || s, each scalar_size bytes."""
    curve = keypair.curve
    digest = hashlib.sha256(message).digest()
    z = _digest_to_int(digest, curve.n) % curve.n
    while True:
        k = _rfc6979_nonce(keypair.private, digest, curve)
        point = curve.mul_base(k)
        assert point is not None
        r = point[0] % curve.n
        if r == 0:
            digest = hashlib.sha256(digest).digest()
            continue
        s = pow(k, -1, curve.n) * (z + r * keypair.private) % curve.n
        if s == 0:
            digest = hashlib.sha256(digest).digest()
            continue
        if s > curve.n // 2:
            s = curve.n - s
        size = curve.scalar_size
        return r.to_bytes(size, "big") + s.to_bytes(size, "big")


def verify_sig(
    public_key: bytes, message: bytes, signature: bytes, curve: CurveParams = SECP256K1
) -> bool:
    """Verify an r || s signature; malformed inputs return False."""
    size = curve.scalar_size
    if len(signature) != 2 * size:
        return False
    r = int.from_bytes(signature[:size], "big")
    s = int.from_bytes(signature[size:], "big")
    if not (0 < r < curve.n and 0 < s < curve.n):
        return False
    try:
        pub = decode_point(curve, public_key)
    except CurveError:
        return False
    z = _digest_to_int(hashlib.sha256(message).digest(), curve.n) % curve.n
    sinv = pow(s, -1, curve.n)
    point = curve.add(
        curve.mul_base(z * sinv % curve.n),
        curve.mul(r * sinv % curve.n, pub),
    )
    if point is None:
        return False
    return point[0] % curve.n == r
