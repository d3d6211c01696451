"""Prime-field parameters for the secret-sharing group.

The group is the order-q multiplicative subgroup of Z_p*, with q prime
and q | p-1. Polynomial arithmetic for secret sharing happens in Z_q;
commitments live in the subgroup of Z_p* generated by g.
"""

from __future__ import annotations

from dataclasses import dataclass


class FieldParamsError(ValueError):
    """Raised when (p, q, g) do not describe a valid subgroup."""


@dataclass(frozen=True)
class FieldParams:
    """A (p, q, g) triple: q-order subgroup of Z_p* generated by g."""

    p: int
    q: int
    g: int

    def __post_init__(self) -> None:
        if self.p < 3 or self.q < 2:
            raise FieldParamsError("p and q must be primes greater than 2")
        if (self.p - 1) % self.q != 0:
            raise FieldParamsError("q must divide p - 1")
        if not 1 < self.g < self.p:
            raise FieldParamsError("g must lie in (1, p)")
        if pow(self.g, self.q, self.p) != 1:
            raise FieldParamsError("g does not have order dividing q")

    @property
    def element_size(self) -> int:
        """Byte width of a group element mod p."""
        return (self.p.bit_length() + 7) // 8

    @property
    def scalar_size(self) -> int:
        """Byte width of a scalar mod q."""
        return (self.q.bit_length() + 7) // 8

    def encode_scalar(self, value: int) -> bytes:
        """Fixed-width big-endian encoding of an element of Z_q."""
        if not 0 <= value < self.q:
            raise FieldParamsError(f"scalar {value} out of range [0, q)")
        return value.to_bytes(self.scalar_size, "big")

    def decode_scalar(self, raw: bytes) -> int:
        if len(raw) != self.scalar_size:
            raise FieldParamsError(f"expected {self.scalar_size} bytes, got {len(raw)}")
        value = int.from_bytes(raw, "big")
        if value >= self.q:
            raise FieldParamsError("decoded scalar not reduced mod q")
        return value


# Small parameters for exhaustive tests: 4 generates the order-11
# subgroup of Z_23* (4 = 2^2 and 2 has order 11 mod 23).
TEST_FIELD = FieldParams(p=23, q=11, g=4)

# Production parameters: DSA-style pair with a 2048-bit prime p and a
# 256-bit prime subgroup order q, generated once from the fixed seed
# "crossrelay-field-v1" (q drawn first, then p = q*m + 1 searched for
# primality) and frozen here. g = 2^((p-1)/q) mod p.
_P = int(
    "BCAF92BB7E73A2F259489672D45999041368CB6BC158910BC602AD53638A35E8"
    "2F41DCF9B7B069BCC6D5CBB2F0E6910EA260114AC9F0AB27BAFD811E51DC277E"
    "781D212669CC99A5EB88B8447FB8FB77552DF566ED60AD008BC4BFB86E226679"
    "85BD8A9662AB816FBD7655C26272AA79303638BAFB46049486125F99C013AB4F"
    "B6AB431457B12168AB58032AB36D34C66C5DB63D018F331280FCC98E76694FD3"
    "640B03E687DBE3A2A1ADDFCEF79DBAFEDC6FF9CAE337D5488781D70514ABC9A5"
    "1321F03AD7C15C18F85523928DA39EE1B4D16FBB6C683E12F28D07FB1487BD5A"
    "6354D271A077A9B7D46F601C10C3AFB8879721A51842C2183C68F297A45AA6E9",
    16,
)
_Q = int("BD064B8585EF0121A1AF15440925CB16B91B24B7FACC46AC24CFECA7B168377D", 16)
_G = int(
    "AFA78BB4CB406D83DD7CAF4D04E9C36B517A9347457E72EF90D8FD826524F259"
    "2936157682EDC834589EF02F592D942FC59935844323B67A363F212AE8E3A77B"
    "6665C5E331106B39E6885F963CD7C8F09557E3112464C3747BC162B3BD1C7115"
    "F4A35D6E762AE933E9EB6F2964881AD005D99115D19577F7DF1CD578497C05E6"
    "B1AB9AFC9302279AE770D0DD96ABBFD9E0FFE403CFB9F2F8E11689C5D545119F"
    "932C7F06EEC2CF793707D7465BCA0F2FD75591BBCDE458278B85A704D6C2D067"
    "4F9344A1DA8E3613F41E24FA3481147853F24DE39E32BCD81DC945AF25CDF22B"
    "1DE3993022C2BF0B047C36B6B9134D88E52F39C6826A249EDEE4BEB855FD4EC1",
    16,
)

DEFAULT_FIELD = FieldParams(p=_P, q=_Q, g=_G)
