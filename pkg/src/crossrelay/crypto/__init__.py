"""Cryptographic primitives: finite-field secret sharing, elliptic-curve
key exchange, deterministic signatures, and authenticated encryption.

Everything in this subpackage is protocol-agnostic: pure functions over
value types, with entropy always supplied by the caller.
"""

from crossrelay.crypto.aead import (
    AuthenticationError,
    NonceSequence,
    aead_decrypt,
    aead_encrypt,
)
from crossrelay.crypto.curve import (
    SECP256K1,
    TEST_CURVE,
    CurveError,
    CurveParams,
    InvalidPointError,
    decode_point,
    encode_point,
)
from crossrelay.crypto.ecdh import (
    CommunicationKey,
    KeyExchangeMessage,
    ScalarRangeError,
    ecdh_derive,
    ecdh_respond,
)
from crossrelay.crypto.field import DEFAULT_FIELD, TEST_FIELD, FieldParams
from crossrelay.crypto.signing import SigningKeypair, sign, verify_sig
from crossrelay.crypto.vss import (
    CommitmentVector,
    FeldmanDeal,
    Share,
    VssError,
    vss_check_secret,
    vss_deal,
    vss_recover,
    vss_verify_share,
)

__all__ = [
    "AuthenticationError",
    "CommitmentVector",
    "CommunicationKey",
    "CurveError",
    "CurveParams",
    "DEFAULT_FIELD",
    "FeldmanDeal",
    "FieldParams",
    "InvalidPointError",
    "KeyExchangeMessage",
    "NonceSequence",
    "SECP256K1",
    "ScalarRangeError",
    "Share",
    "SigningKeypair",
    "TEST_CURVE",
    "TEST_FIELD",
    "VssError",
    "aead_decrypt",
    "aead_encrypt",
    "decode_point",
    "ecdh_derive",
    "ecdh_respond",
    "encode_point",
    "sign",
    "verify_sig",
    "vss_check_secret",
    "vss_deal",
    "vss_recover",
    "vss_verify_share",
]
