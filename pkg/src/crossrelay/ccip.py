"""Cross-chain interoperability protocol: types, codec, and validity rules.

Wire layout (format version 1): fields in figure order, all integers
big-endian, every variable-length field 4-byte-length-prefixed.

    frame    := version u8
              | src_chain u32 | dst_chain u32 | type u8
              | seq_num u64 | timestamp1 u64
              | router_public_key 33B | signature 64B
              | payload
    payload  := registration (type 0, plaintext)
              | nonce 12B, ciphertext lp-bytes (types 1 and 2)

The router signature covers every header field except the signature
itself, concatenated with the payload bytes as they appear on the wire.
The originator signature covers the canonical encoding of the decrypted
payload minus the originator's own key and signature.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Union

from crossrelay.acl import WILDCARD, AccessRule, AclError
from crossrelay.crypto.curve import SECP256K1, CurveError, decode_point
from crossrelay.crypto.signing import SigningKeypair, sign, verify_sig

FORMAT_VERSION = 1

POINT_SIZE = 33
SIGNATURE_SIZE = 64
HASH_SIZE = 32
NONCE_SIZE = 12

ZERO_SESSION = b"\x00" * HASH_SIZE

# wire sentinel for an "*" chain pattern inside registration ACL rules
_CHAIN_WILDCARD = 0xFFFFFFFF


class TxType(IntEnum):
    REGISTRATION = 0
    REQUEST = 1
    RESPONSE = 2


class EncodeError(ValueError):
    """Raised when a transaction cannot be canonically encoded."""


class DecodeError(ValueError):
    """Raised when raw bytes do not parse as a valid frame."""


@dataclass(frozen=True)
class CcipHeader:
    src_chain: int
    dst_chain: int
    tx_type: TxType
    seq_num: int
    timestamp1: int
    router_public_key: bytes
    signature: bytes = b"\x00" * SIGNATURE_SIZE


@dataclass(frozen=True)
class Call:
    """A contract call: function name and positional byte-string arguments."""

    function: str
    args: tuple[bytes, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.function and not self.args

    @classmethod
    def empty(cls) -> "Call":
        return cls("", ())


@dataclass(frozen=True)
class RegistrationPayload:
    """Plaintext payload of a registration transaction (type 0)."""

    key_message: bytes  # compressed B point
    router_ipv4: str
    router_port: int
    access_control_table: tuple[AccessRule, ...] = ()


@dataclass(frozen=True)
class CrossChainPayload:
    """Decrypted payload of a request or response transaction."""

    src_contract: str
    dst_contract: str
    timestamp2: int
    originator_public_key: bytes
    originator_signature: bytes
    session_hash: bytes
    timeout: int
    input: Call
    callback: Call = field(default_factory=Call.empty)
    extra: bytes = b""


@dataclass(frozen=True)
class EncryptedEnvelope:
    """AEAD ciphertext plus its explicit nonce, as carried on the wire."""

    nonce: bytes
    ciphertext: bytes


PayloadEnvelope = Union[RegistrationPayload, EncryptedEnvelope]


@dataclass(frozen=True)
class CrossChainTransaction:
    header: CcipHeader
    payload: PayloadEnvelope


class Validity(Enum):
    OK = "ok"
    MALFORMED = "malformed"
    EXPIRED = "expired"
    BAD_SIGNATURE = "bad-signature"


@dataclass(frozen=True)
class ValidationResult:
    status: Validity
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Validity.OK


# -- primitive readers/writers ------------------------------------------------


class Reader:
    def __init__(self, raw: bytes) -> None:
        self._raw = raw
        self._pos = 0

    @property
    def remaining(self) -> int:
        return len(self._raw) - self._pos

    def take(self, size: int) -> bytes:
        if size < 0 or size > self.remaining:
            raise DecodeError("truncated frame")
        chunk = self._raw[self._pos : self._pos + size]
        self._pos += size
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def lp_bytes(self) -> bytes:
        size = self.u32()
        if size > self.remaining:
            raise DecodeError("length prefix overflows frame")
        return self.take(size)

    def lp_str(self) -> str:
        raw = self.lp_bytes()
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise DecodeError("invalid UTF-8 in string field") from None

    def expect_end(self) -> None:
        if self.remaining:
            raise DecodeError(f"{self.remaining} trailing bytes after frame")


def _u8(value: int) -> bytes:
    return struct.pack(">B", value)


def _u16(value: int) -> bytes:
    return struct.pack(">H", value)


def _u32(value: int) -> bytes:
    return struct.pack(">I", value)


def _u64(value: int) -> bytes:
    return struct.pack(">Q", value)


def _lp(raw: bytes) -> bytes:
    return _u32(len(raw)) + raw


def _lp_str(text: str) -> bytes:
    return _lp(text.encode("utf-8"))


def _fixed(raw: bytes, size: int, what: str) -> bytes:
    if len(raw) != size:
        raise EncodeError(f"{what} must be {size} bytes, got {len(raw)}")
    return raw


# -- calls ---------------------------------------------------------------------


def encode_call(call: Call) -> bytes:
    out = [_lp_str(call.function), _u32(len(call.args))]
    out.extend(_lp(arg) for arg in call.args)
    return b"".join(out)


def _decode_call(reader: Reader) -> Call:
    function = reader.lp_str()
    count = reader.u32()
    args = tuple(reader.lp_bytes() for _ in range(count))
    return Call(function, args)


def decode_call(raw: bytes) -> Call:
    reader = Reader(raw)
    call = _decode_call(reader)
    reader.expect_end()
    return call


# -- ACL rules on the wire ------------------------------------------------------


def _encode_rule(rule: AccessRule) -> bytes:
    out = [_u32(rule.resource_blockchain)]
    if rule.authorized_blockchain == WILDCARD:
        out.append(_u32(_CHAIN_WILDCARD))
    else:
        authorized = int(rule.authorized_blockchain)
        if authorized >= _CHAIN_WILDCARD:
            raise EncodeError("chain ID collides with the wildcard sentinel")
        out.append(_u32(authorized))
    out.append(_lp_str(rule.contract))
    out.append(_lp_str(rule.resource_path))
    out.append(_lp_str(rule.operate))
    if rule.user_identity == WILDCARD:
        out.append(_u32(0))
    else:
        keys = rule.user_identity
        assert not isinstance(keys, str)
        out.append(_u32(len(keys)))
        out.extend(_fixed(key, POINT_SIZE, "user identity key") for key in keys)
    return b"".join(out)


def _decode_rule(reader: Reader) -> AccessRule:
    resource = reader.u32()
    authorized_raw = reader.u32()
    authorized = WILDCARD if authorized_raw == _CHAIN_WILDCARD else authorized_raw
    contract = reader.lp_str()
    path = reader.lp_str()
    operate = reader.lp_str()
    count = reader.u32()
    users = WILDCARD if count == 0 else tuple(reader.take(POINT_SIZE) for _ in range(count))
    try:
        return AccessRule(resource, authorized, contract, path, operate, users)
    except AclError as exc:
        raise DecodeError(f"invalid access rule: {exc}") from None


# -- payloads -------------------------------------------------------------------


def encode_registration_payload(payload: RegistrationPayload) -> bytes:
    try:
        ip_bytes = bytes(int(part) for part in payload.router_ipv4.split("."))
    except ValueError:
        raise EncodeError(f"bad IPv4 address {payload.router_ipv4!r}") from None
    if len(ip_bytes) != 4:
        raise EncodeError(f"bad IPv4 address {payload.router_ipv4!r}")
    out = [
        _fixed(payload.key_message, POINT_SIZE, "key message"),
        ip_bytes,
        _u16(payload.router_port),
        _u32(len(payload.access_control_table)),
    ]
    out.extend(_encode_rule(rule) for rule in payload.access_control_table)
    return b"".join(out)


def _decode_registration_payload(reader: Reader) -> RegistrationPayload:
    key_message = reader.take(POINT_SIZE)
    ipv4 = ".".join(str(b) for b in reader.take(4))
    port = reader.u16()
    count = reader.u32()
    rules = tuple(_decode_rule(reader) for _ in range(count))
    return RegistrationPayload(key_message, ipv4, port, rules)


def encode_payload(payload: CrossChainPayload) -> bytes:
    return b"".join(
        [
            _lp_str(payload.src_contract),
            _lp_str(payload.dst_contract),
            _u64(payload.timestamp2),
            _fixed(payload.originator_public_key, POINT_SIZE, "originator public key"),
            _fixed(payload.originator_signature, SIGNATURE_SIZE, "originator signature"),
            _fixed(payload.session_hash, HASH_SIZE, "session hash"),
            _u64(payload.timeout),
            encode_call(payload.input),
            encode_call(payload.callback),
            _lp(payload.extra),
        ]
    )


def decode_payload(raw: bytes) -> CrossChainPayload:
    reader = Reader(raw)
    payload = CrossChainPayload(
        src_contract=reader.lp_str(),
        dst_contract=reader.lp_str(),
        timestamp2=reader.u64(),
        originator_public_key=reader.take(POINT_SIZE),
        originator_signature=reader.take(SIGNATURE_SIZE),
        session_hash=reader.take(HASH_SIZE),
        timeout=reader.u64(),
        input=_decode_call(reader),
        callback=_decode_call(reader),
        extra=reader.lp_bytes(),
    )
    reader.expect_end()
    return payload


def payload_signing_bytes(payload: CrossChainPayload) -> bytes:
    """Originator signature coverage: every payload field except the
    originator's public key and signature."""
    return b"".join(
        [
            _lp_str(payload.src_contract),
            _lp_str(payload.dst_contract),
            _u64(payload.timestamp2),
            _fixed(payload.session_hash, HASH_SIZE, "session hash"),
            _u64(payload.timeout),
            encode_call(payload.input),
            encode_call(payload.callback),
            _lp(payload.extra),
        ]
    )


# -- frames ----------------------------------------------------------------------


def _encode_header_unsigned(header: CcipHeader) -> bytes:
    try:
        return b"".join(
            [
                _u32(header.src_chain),
                _u32(header.dst_chain),
                _u8(int(header.tx_type)),
                _u64(header.seq_num),
                _u64(header.timestamp1),
                _fixed(header.router_public_key, POINT_SIZE, "router public key"),
            ]
        )
    except struct.error as exc:
        raise EncodeError(f"header field out of range: {exc}") from None


def encode_payload_envelope(tx_type: TxType, payload: PayloadEnvelope) -> bytes:
    if tx_type is TxType.REGISTRATION:
        if not isinstance(payload, RegistrationPayload):
            raise EncodeError("registration transactions carry a plaintext payload")
        return encode_registration_payload(payload)
    if not isinstance(payload, EncryptedEnvelope):
        raise EncodeError("request/response payloads must be encrypted in transit")
    return _fixed(payload.nonce, NONCE_SIZE, "nonce") + _lp(payload.ciphertext)


def header_signing_bytes(header: CcipHeader, payload_bytes: bytes) -> bytes:
    """Router signature coverage: all header fields except the signature,
    concatenated with the payload bytes as they appear on the wire."""
    return _encode_header_unsigned(header) + payload_bytes


def header_aad(header: CcipHeader) -> bytes:
    """AEAD associated data for the submission leg: the unsigned header,
    so a payload ciphertext cannot be replanted under another header."""
    return _encode_header_unsigned(header)


def forward_aad(request_hash: bytes, src_chain: int, dst_chain: int, tx_type: TxType) -> bytes:
    """AEAD associated data for the relay-to-router forwarding leg."""
    return b"crossrelay/fwd/v1" + request_hash + _u32(src_chain) + _u32(dst_chain) + _u8(int(tx_type))


def sign_transaction(
    keypair: SigningKeypair, header: CcipHeader, payload: PayloadEnvelope
) -> CrossChainTransaction:
    """Fill in the router signature and assemble the transaction."""
    payload_bytes = encode_payload_envelope(header.tx_type, payload)
    signature = sign(keypair, header_signing_bytes(header, payload_bytes))
    return CrossChainTransaction(replace(header, signature=signature), payload)


def encode(tx: CrossChainTransaction) -> bytes:
    if not isinstance(tx.header.tx_type, TxType):
        raise EncodeError(f"unknown transaction type {tx.header.tx_type!r}")
    return b"".join(
        [
            _u8(FORMAT_VERSION),
            _encode_header_unsigned(tx.header),
            _fixed(tx.header.signature, SIGNATURE_SIZE, "router signature"),
            encode_payload_envelope(tx.header.tx_type, tx.payload),
        ]
    )


def decode(raw: bytes) -> CrossChainTransaction:
    reader = Reader(raw)
    version = reader.u8()
    if version != FORMAT_VERSION:
        raise DecodeError(f"unsupported format version {version}")
    src_chain = reader.u32()
    dst_chain = reader.u32()
    type_byte = reader.u8()
    try:
        tx_type = TxType(type_byte)
    except ValueError:
        raise DecodeError(f"unknown transaction type byte {type_byte}") from None
    header = CcipHeader(
        src_chain=src_chain,
        dst_chain=dst_chain,
        tx_type=tx_type,
        seq_num=reader.u64(),
        timestamp1=reader.u64(),
        router_public_key=reader.take(POINT_SIZE),
        signature=reader.take(SIGNATURE_SIZE),
    )
    payload: PayloadEnvelope
    if tx_type is TxType.REGISTRATION:
        payload = _decode_registration_payload(reader)
    else:
        payload = EncryptedEnvelope(nonce=reader.take(NONCE_SIZE), ciphertext=reader.lp_bytes())
    reader.expect_end()
    return CrossChainTransaction(header, payload)


def tx_hash(tx: CrossChainTransaction) -> bytes:
    """SHA-256 of the canonical frame encoding."""
    return hashlib.sha256(encode(tx)).digest()


def validate_structure(
    tx: CrossChainTransaction, now: int, payload: CrossChainPayload | None = None
) -> ValidationResult:
    """Structural validity of a transaction at time ``now`` (milliseconds).

    Header-level rules (type range, router signature, registration point)
    are always checked. Payload-level rules (the session-hash-zero rule
    and expiry) additionally apply when the decrypted ``payload`` is
    supplied; in transit those fields are visible only inside an enclave.
    """
    if not isinstance(tx.header.tx_type, TxType):
        return ValidationResult(Validity.MALFORMED, f"unknown type {tx.header.tx_type!r}")
    try:
        payload_bytes = encode_payload_envelope(tx.header.tx_type, tx.payload)
    except EncodeError as exc:
        return ValidationResult(Validity.MALFORMED, str(exc))
    if not verify_sig(
        tx.header.router_public_key,
        header_signing_bytes(tx.header, payload_bytes),
        tx.header.signature,
        SECP256K1,
    ):
        return ValidationResult(Validity.BAD_SIGNATURE, "router signature does not verify")
    if isinstance(tx.payload, RegistrationPayload):
        try:
            decode_point(SECP256K1, tx.payload.key_message)
        except CurveError as exc:
            return ValidationResult(Validity.MALFORMED, f"key message: {exc}")
    if payload is not None:
        if tx.header.tx_type is TxType.REQUEST and payload.session_hash != ZERO_SESSION:
            return ValidationResult(
                Validity.MALFORMED, "request opening a session must carry a zero session hash"
            )
        if tx.header.tx_type is TxType.RESPONSE and payload.session_hash == ZERO_SESSION:
            return ValidationResult(Validity.MALFORMED, "response must reference a session hash")
        if now > payload.timestamp2 + payload.timeout:
            return ValidationResult(
                Validity.EXPIRED,
                f"expired at {payload.timestamp2 + payload.timeout}, now {now}",
            )
    return ValidationResult(Validity.OK)
