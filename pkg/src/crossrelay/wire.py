"""Transport envelopes exchanged between routers and relay nodes.

The CCIP frame format (ccip.py) is the protocol proper; this module
frames the handful of message kinds that travel over the simulated
network: transaction submissions, block broadcasts, forwarded payloads,
and the attestation handshake of registration.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from crossrelay import ccip
from crossrelay.enclave import AttestationQuote, MEASUREMENT_SIZE, PLATFORM_ID_SIZE, REPORT_DATA_SIZE


class MsgType(IntEnum):
    SUBMIT = 1
    BLOCK = 2
    FORWARD = 3
    ATTEST_REQ = 4
    ATTEST_RESP = 5


class WireError(ValueError):
    pass


@dataclass(frozen=True)
class ForwardedTx:
    """A verified payload re-encrypted for its destination router.

    ``tx_hash`` is the hash of the transaction being forwarded (for a
    request it doubles as the session hash)."""

    tx_hash: bytes
    src_chain: int
    dst_chain: int
    tx_type: ccip.TxType
    envelope: ccip.EncryptedEnvelope


def envelope(msg_type: MsgType, body: bytes) -> bytes:
    return bytes([int(msg_type)]) + body


def open_envelope(frame: bytes) -> tuple[MsgType, bytes]:
    if not frame:
        raise WireError("empty frame")
    try:
        msg_type = MsgType(frame[0])
    except ValueError:
        raise WireError(f"unknown message type {frame[0]}") from None
    return msg_type, frame[1:]


def encode_forward(fwd: ForwardedTx) -> bytes:
    return envelope(
        MsgType.FORWARD,
        fwd.tx_hash
        + struct.pack(">IIB", fwd.src_chain, fwd.dst_chain, int(fwd.tx_type))
        + fwd.envelope.nonce
        + struct.pack(">I", len(fwd.envelope.ciphertext))
        + fwd.envelope.ciphertext,
    )


def decode_forward(body: bytes) -> ForwardedTx:
    if len(body) < 32 + 9 + 12 + 4:
        raise WireError("forward frame too short")
    tx_hash = body[:32]
    src_chain, dst_chain, type_byte = struct.unpack(">IIB", body[32:41])
    try:
        tx_type = ccip.TxType(type_byte)
    except ValueError:
        raise WireError(f"bad transaction type {type_byte} in forward frame") from None
    nonce = body[41:53]
    size = struct.unpack(">I", body[53:57])[0]
    ciphertext = body[57:]
    if len(ciphertext) != size:
        raise WireError("forward ciphertext length mismatch")
    return ForwardedTx(tx_hash, src_chain, dst_chain, tx_type, ccip.EncryptedEnvelope(nonce, ciphertext))


def encode_attest_req(reply_address: str) -> bytes:
    raw = reply_address.encode("utf-8")
    return envelope(MsgType.ATTEST_REQ, struct.pack(">I", len(raw)) + raw)


def decode_attest_req(body: bytes) -> str:
    if len(body) < 4:
        raise WireError("attestation request too short")
    size = struct.unpack(">I", body[:4])[0]
    raw = body[4:]
    if len(raw) != size:
        raise WireError("attestation request length mismatch")
    return raw.decode("utf-8")


def encode_attest_resp(point: bytes, quote: AttestationQuote) -> bytes:
    if len(point) != ccip.POINT_SIZE:
        raise WireError("key-exchange point must be compressed")
    return envelope(
        MsgType.ATTEST_RESP,
        point
        + quote.measurement
        + quote.platform_id
        + quote.report_data
        + struct.pack(">I", len(quote.signature))
        + quote.signature,
    )


def decode_attest_resp(body: bytes) -> tuple[bytes, AttestationQuote]:
    fixed = ccip.POINT_SIZE + MEASUREMENT_SIZE + PLATFORM_ID_SIZE + REPORT_DATA_SIZE + 4
    if len(body) < fixed:
        raise WireError("attestation response too short")
    offset = 0
    point = body[offset : offset + ccip.POINT_SIZE]
    offset += ccip.POINT_SIZE
    measurement = body[offset : offset + MEASUREMENT_SIZE]
    offset += MEASUREMENT_SIZE
    platform_id = body[offset : offset + PLATFORM_ID_SIZE]
    offset += PLATFORM_ID_SIZE
    report_data = body[offset : offset + REPORT_DATA_SIZE]
    offset += REPORT_DATA_SIZE
    size = struct.unpack(">I", body[offset : offset + 4])[0]
    signature = body[offset + 4 :]
    if len(signature) != size:
        raise WireError("attestation signature length mismatch")
    return point, AttestationQuote(measurement, platform_id, report_data, signature)
