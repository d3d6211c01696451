"""Feldman verifiable secret sharing.

A dealer splits a secret s in Z_q into n shares s_i = f(i) of a random
degree t-1 polynomial f with f(0) = s, and publishes commitments
E_j = g^{a_j} mod p to the coefficients. Any holder of share (i, s_i)
can check g^{s_i} = prod_j E_j^{i^j} mod p, and any t verified shares
recover s by Lagrange interpolation at zero.

The threshold is fixed at t = ceil(2n/3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from random import Random
from typing import Iterable, Sequence

from crossrelay.crypto.field import FieldParams


class VssError(ValueError):
    """Raised on invalid dealing or recovery inputs."""


@dataclass(frozen=True)
class Share:
    """One participant's share (i, f(i)) with 1-based index."""

    index: int
    value: int

    def __post_init__(self) -> None:
        if self.index < 1:
            raise VssError("share index must be >= 1 (index 0 is the secret itself)")

    def encode(self, params: FieldParams) -> bytes:
        return self.index.to_bytes(4, "big") + params.encode_scalar(self.value)

    @classmethod
    def decode(cls, params: FieldParams, raw: bytes) -> "Share":
        if len(raw) != 4 + params.scalar_size:
            raise VssError(f"share encoding must be {4 + params.scalar_size} bytes")
        return cls(int.from_bytes(raw[:4], "big"), params.decode_scalar(raw[4:]))


@dataclass(frozen=True)
class CommitmentVector:
    """Public commitments E_j = g^{a_j} mod p, one per coefficient."""

    entries: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class FeldmanDeal:
    """Everything the dealer produces for one sharing of a secret.

    ``coefficients`` (including the secret at position 0) are dealer-private;
    ``shares`` go to individual participants and ``commitments`` are public.
    """

    params: FieldParams
    n: int
    t: int
    coefficients: tuple[int, ...]
    shares: tuple[Share, ...]
    commitments: CommitmentVector


def threshold(n: int) -> int:
    """Recovery threshold t = ceil(2n/3) for n participants."""
    return math.ceil(2 * n / 3)


def _poly_eval(coefficients: Sequence[int], x: int, q: int) -> int:
    acc = 0
    for a in reversed(coefficients):
        acc = (acc * x + a) % q
    return acc


def vss_deal(params: FieldParams, n: int, secret: int, rng: Random) -> FeldmanDeal:
    """Deal ``secret`` into n shares with threshold ceil(2n/3).

    ``rng`` supplies the t-1 random polynomial coefficients; pass a
    seeded ``random.Random`` for reproducible deals or
    ``random.SystemRandom()`` for production entropy.
    """
    if n < 1:
        raise VssError("participant count must be >= 1")
    if n >= params.q:
        raise VssError("participant count must be smaller than q")
    if not 0 <= secret < params.q:
        raise VssError("secret out of range [0, q)")
    t = threshold(n)
    coefficients = [secret] + [rng.randrange(params.q) for _ in range(t - 1)]
    shares = tuple(Share(i, _poly_eval(coefficients, i, params.q)) for i in range(1, n + 1))
    commitments = CommitmentVector(tuple(pow(params.g, a, params.p) for a in coefficients))
    return FeldmanDeal(
        params=params,
        n=n,
        t=t,
        coefficients=tuple(coefficients),
        shares=shares,
        commitments=commitments,
    )


def vss_verify_share(params: FieldParams, share: Share, commitments: CommitmentVector) -> bool:
    """Check g^{s_i} = prod_j E_j^{i^j} mod p.

    Exponents i^j are reduced mod q, which is sound because every
    commitment lies in the order-q subgroup.
    """
    lhs = pow(params.g, share.value % params.q, params.p)
    rhs = 1
    for j, entry in enumerate(commitments.entries):
        rhs = rhs * pow(entry, pow(share.index, j, params.q), params.p) % params.p
    return lhs == rhs


def vss_recover(params: FieldParams, shares: Iterable[Share], t: int) -> int:
    """Recover the secret from at least t shares by interpolation at 0."""
    shares = list(shares)
    indices = [s.index for s in shares]
    if len(set(indices)) != len(indices):
        raise VssError("duplicate share indices")
    if len(shares) < t:
        raise VssError(f"need at least {t} shares, got {len(shares)}")
    q = params.q
    secret = 0
    for k, share in enumerate(shares):
        num, den = 1, 1
        for j, other in enumerate(shares):
            if j == k:
                continue
            num = num * other.index % q
            den = den * (other.index - share.index) % q
        secret = (secret + share.value * num * pow(den, -1, q)) % q
    return secret


def vss_check_secret(params: FieldParams, secret: int, commitments: CommitmentVector) -> bool:
    """Check a recovered secret against the public commitment E_0 = g^s."""
    return pow(params.g, secret % params.q, params.p) == commitments.entries[0]
