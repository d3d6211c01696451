"""Elliptic-curve Diffie-Hellman key agreement.

One side holds a scalar s and publishes A = s*G; the other holds b and
publishes B = b*G. Both derive the same 32-byte communication key from
the x-coordinate of s*B = b*A via a hash KDF (raw coordinates are
biased, so they are never used directly).
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field

from crossrelay.crypto.curve import (
    CurveParams,
    InvalidPointError,
    Point,
    decode_point,
    encode_point,
)

_KDF_LABEL = b"crossrelay/comm-key/v1"

KEY_SIZE = 32


class ScalarRangeError(ValueError):
    """Raised when a private scalar falls outside (0, n)."""


@dataclass(frozen=True)
class KeyExchangeMessage:
    """A public key-exchange point, validated on construction."""

    curve: CurveParams
    point: Point

    def __post_init__(self) -> None:
        if self.point is None:
            raise InvalidPointError("key-exchange point must not be the point at infinity")
        if not self.curve.contains(self.point):
            raise InvalidPointError("key-exchange point is not on the curve")

    def encode(self) -> bytes:
        return encode_point(self.curve, self.point)

    @classmethod
    def decode(cls, curve: CurveParams, raw: bytes) -> "KeyExchangeMessage":
        return cls(curve, decode_point(curve, raw))


@dataclass(frozen=True)
class CommunicationKey:
    """Fixed-length symmetric key shared by both ends of an exchange."""

    key: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.key) != KEY_SIZE:
            raise ValueError(f"communication key must be {KEY_SIZE} bytes")

    def __repr__(self) -> str:  # never show key material
        return "CommunicationKey(<hidden>)"


def _check_scalar(curve: CurveParams, scalar: int) -> None:
    if not 0 < scalar < curve.n:
        raise ScalarRangeError(f"scalar must be in (0, {curve.n})")


def ecdh_respond(params: CurveParams, secret: int) -> KeyExchangeMessage:
    """Public half of the exchange: secret * G."""
    _check_scalar(params, secret)
    return KeyExchangeMessage(params, params.mul_base(secret))


def ecdh_derive(
    params: CurveParams, my_scalar: int, their_point: KeyExchangeMessage | Point
) -> CommunicationKey:
    """Derive the shared key from my scalar and the peer's public point.

    The peer point is re-validated here, so feeding an off-curve point
    (an invalid-curve attack) raises instead of deriving a key.
    """
    _check_scalar(params, my_scalar)
    point = their_point.point if isinstance(their_point, KeyExchangeMessage) else their_point
    if point is None:
        raise InvalidPointError("peer point must not be the point at infinity")
    if not params.contains(point):
        raise InvalidPointError("peer point is not on the curve")
    shared = params.mul(my_scalar, point)
    if shared is None:
        raise InvalidPointError("shared point degenerated to infinity")
    x_bytes = shared[0].to_bytes(params.coordinate_size, "big")
    return CommunicationKey(hmac.new(_KDF_LABEL, x_bytes, hashlib.sha256).digest())
