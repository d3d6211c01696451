"""Short-Weierstrass elliptic-curve arithmetic over prime fields.

Points are affine ``(x, y)`` tuples with ``None`` as the point at
infinity. Scalar multiplication runs in Jacobian coordinates to avoid
a field inversion per step. No constant-time guarantees.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

Point = Optional[tuple[int, int]]

INFINITY: Point = None


class CurveError(ValueError):
    """Raised on invalid curve parameters or point encodings."""


class InvalidPointError(CurveError):
    """Raised when a point is off the curve or the point at infinity."""


@dataclass(frozen=True)
class CurveParams:
    """y^2 = x^3 + a*x + b over GF(p), base point G of prime order n."""

    name: str
    p: int
    a: int
    b: int
    gx: int
    gy: int
    n: int

    def __post_init__(self) -> None:
        if (4 * self.a**3 + 27 * self.b**2) % self.p == 0:
            raise CurveError("singular curve")
        if not self.contains((self.gx, self.gy)):
            raise CurveError("base point not on curve")

    @property
    def generator(self) -> Point:
        return (self.gx, self.gy)

    @property
    def coordinate_size(self) -> int:
        """Byte width of one coordinate."""
        return (self.p.bit_length() + 7) // 8

    @property
    def point_size(self) -> int:
        """Byte width of a compressed point (prefix + x)."""
        return 1 + self.coordinate_size

    @property
    def scalar_size(self) -> int:
        return (self.n.bit_length() + 7) // 8

    def contains(self, point: Point) -> bool:
        """True for the point at infinity or any (x, y) on the curve."""
        if point is None:
            return True
        x, y = point
        if not (0 <= x < self.p and 0 <= y < self.p):
            return False
        return (y * y - (x * x * x + self.a * x + self.b)) % self.p == 0

    def neg(self, point: Point) -> Point:
        if point is None:
            return None
        x, y = point
        return (x, (-y) % self.p)

    def add(self, p1: Point, p2: Point) -> Point:
        if p1 is None:
            return p2
        if p2 is None:
            return p1
        x1, y1 = p1
        x2, y2 = p2
        if x1 == x2 and (y1 + y2) % self.p == 0:
            return None
        if p1 == p2:
            lam = (3 * x1 * x1 + self.a) * pow(2 * y1, -1, self.p) % self.p
        else:
            lam = (y2 - y1) * pow(x2 - x1, -1, self.p) % self.p
        x3 = (lam * lam - x1 - x2) % self.p
        return (x3, (lam * (x1 - x3) - y1) % self.p)

    def mul(self, k: int, point: Point) -> Point:
        """k * point for k >= 0 (double-and-add in Jacobian coordinates)."""
        if k < 0:
            raise CurveError("negative scalar")
        k %= self.n
        if k == 0 or point is None:
            return None
        rx, ry, rz = 0, 1, 0  # Jacobian infinity
        qx, qy, qz = point[0], point[1], 1
        while k:
            if k & 1:
                rx, ry, rz = self._jadd(rx, ry, rz, qx, qy, qz)
            qx, qy, qz = self._jdouble(qx, qy, qz)
            k >>= 1
        return self._from_jacobian(rx, ry, rz)

    def mul_base(self, k: int) -> Point:
        """k * G using a cached 4-bit window table over the base point."""
        k %= self.n
        if k == 0:
            return None
        table = _base_table(self)
        rx, ry, rz = 0, 1, 0
        for window in table:
            digit = k & 0xF
            k >>= 4
            if digit:
                px, py = window[digit - 1]
                rx, ry, rz = self._jadd(rx, ry, rz, px, py, 1)
            if not k:
                break
        return self._from_jacobian(rx, ry, rz)

    # Jacobian helpers: (X, Y, Z) represents (X/Z^2, Y/Z^3); Z = 0 is infinity.

    def _jdouble(self, x: int, y: int, z: int) -> tuple[int, int, int]:
        p = self.p
        if z == 0 or y == 0:
            return (0, 1, 0)
        ysq = y * y % p
        s = 4 * x * ysq % p
        m = (3 * x * x + self.a * pow(z, 4, p)) % p
        nx = (m * m - 2 * s) % p
        ny = (m * (s - nx) - 8 * ysq * ysq) % p
        nz = 2 * y * z % p
        return (nx, ny, nz)

    def _jadd(self, x1: int, y1: int, z1: int, x2: int, y2: int, z2: int) -> tuple[int, int, int]:
        p = self.p
        if z1 == 0:
            return (x2, y2, z2)
        if z2 == 0:
            return (x1, y1, z1)
        z1sq, z2sq = z1 * z1 % p, z2 * z2 % p
        u1, u2 = x1 * z2sq % p, x2 * z1sq % p
        s1, s2 = y1 * z2sq * z2 % p, y2 * z1sq * z1 % p
        if u1 == u2:
            if s1 != s2:
                return (0, 1, 0)
            return self._jdouble(x1, y1, z1)
        h = (u2 - u1) % p
        r = (s2 - s1) % p
        hsq = h * h % p
        hcu = hsq * h % p
        nx = (r * r - hcu - 2 * u1 * hsq) % p
        ny = (r * (u1 * hsq - nx) - s1 * hcu) % p
        nz = h * z1 * z2 % p
        return (nx, ny, nz)

    def _from_jacobian(self, x: int, y: int, z: int) -> Point:
        if z == 0:
            return None
        zinv = pow(z, -1, self.p)
        zinv2 = zinv * zinv % self.p
        return (x * zinv2 % self.p, y * zinv2 * zinv % self.p)


_BASE_TABLES: dict[tuple[int, int, int], list[list[tuple[int, int]]]] = {}


def _base_table(curve: CurveParams) -> list[list[tuple[int, int]]]:
    """Affine multiples d * 16^j * G for d in 1..15, per 4-bit window j."""
    key = (curve.p, curve.gx, curve.gy)
    table = _BASE_TABLES.get(key)
    if table is None:
        if curve.n <= 15:
            raise CurveError("group order too small for windowed base multiplication")
        table = []
        window_base: Point = curve.generator
        for _ in range((curve.n.bit_length() + 3) // 4):
            row: list[tuple[int, int]] = []
            entry: Point = None
            for _ in range(15):
                entry = curve.add(entry, window_base)
                assert entry is not None  # d < 16 <= n, so d*base never wraps
                row.append(entry)
            table.append(row)
            window_base = curve.mul(16, window_base)
        _BASE_TABLES[key] = table
    return table


def _sqrt_mod(a: int, p: int) -> int:
    """Modular square root (Tonelli-Shanks); raises if a is a non-residue."""
    a %= p
    if a == 0:
        return 0
    if pow(a, (p - 1) // 2, p) != 1:
        raise CurveError("no square root exists")
    if p % 4 == 3:
        return pow(a, (p + 1) // 4, p)
    # Factor p-1 = q * 2^s with q odd, then walk the 2-Sylow subgroup.
    q, s = p - 1, 0
    while q % 2 == 0:
        q //= 2
        s += 1
    z = 2
    while pow(z, (p - 1) // 2, p) != p - 1:
        z += 1
    m, c = s, pow(z, q, p)
    t, r = pow(a, q, p), pow(a, (q + 1) // 2, p)
    while t != 1:
        i, t2 = 0, t
        while t2 != 1:
            t2 = t2 * t2 % p
            i += 1
        b = pow(c, 1 << (m - i - 1), p)
        m, c = i, b * b % p
        t, r = t * c % p, r * b % p
    return r


def encode_point(curve: CurveParams, point: Point) -> bytes:
    """Compressed encoding: 0x02/0x03 prefix (y parity) then big-endian x."""
    if point is None:
        raise InvalidPointError("cannot encode the point at infinity")
    x, y = point
    prefix = 0x03 if y & 1 else 0x02
    return bytes([prefix]) + x.to_bytes(curve.coordinate_size, "big")


def decode_point(curve: CurveParams, raw: bytes) -> Point:
    """Decode a compressed point, rejecting anything off the curve."""
    if len(raw) != curve.point_size:
        raise InvalidPointError(f"compressed point must be {curve.point_size} bytes")
    if raw[0] not in (0x02, 0x03):
        raise InvalidPointError(f"bad compression prefix {raw[0]:#x}")
    x = int.from_bytes(raw[1:], "big")
    if x >= curve.p:
        raise InvalidPointError("x coordinate out of field range")
    try:
        y = _sqrt_mod((x * x * x + curve.a * x + curve.b) % curve.p, curve.p)
    except CurveError:
        raise InvalidPointError("x is not on the curve") from None
    if (y & 1) != (raw[0] & 1):
        y = curve.p - y
    point = (x, y)
    if not curve.contains(point):
        raise InvalidPointError("decoded point fails the curve equation")
    return point


SECP256K1 = CurveParams(
    name="secp256k1",
    p=0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F,
    a=0,
    b=7,
    gx=0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798,
    gy=0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8,
    n=0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141,
)

# 19-point curve for exhaustive unit tests; (5, 1) generates the whole group.
TEST_CURVE = CurveParams(name="tiny17", p=17, a=2, b=2, gx=5, gy=1, n=19)
