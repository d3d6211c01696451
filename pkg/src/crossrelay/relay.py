"""Relay chain node: PoA block production, verification, and forwarding.

The node's REE side admits transactions (decode, replay, ordering, and
router-signature checks), batches them into hash-linked blocks, and
keeps the public ledger: registrations, session records, and per-
transaction verdicts. All payload inspection happens in the node's
enclave; only verdicts and re-encrypted envelopes come back out.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, replace
from enum import IntEnum
from pathlib import Path
from random import Random
from typing import Callable, Optional

from crossrelay import ccip, wire
from crossrelay.crypto.field import FieldParams
from crossrelay.crypto.signing import SigningKeypair, sign, verify_sig
from crossrelay.enclave import (
    BootstrapError,
    EnclaveError,
    EnclaveInstance,
    PayloadAuthError,
    PayloadDecodeError,
    RouterSignatureError,
    UnknownRouterError,
    bootstrap_relay_secret,
)

logger = logging.getLogger(__name__)

GENESIS_PARENT = b"\x00" * 32


class RelayError(RuntimeError):
    pass


class Verdict(IntEnum):
    REGISTERED = 0
    VERIFIED = 1
    DENIED = 2
    EXPIRED = 3
    REJECTED = 4

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class TxRecord:
    """One transaction's fate inside a block: frame plus verdict, and the
    non-confidential session metadata followers need to converge."""

    frame: bytes
    verdict: Verdict
    reason: str
    session_hash: bytes = b"\x00" * 32
    timeout: int = 0


@dataclass(frozen=True)
class RelayBlock:
    height: int
    parent_hash: bytes
    timestamp: int
    producer: str
    records: tuple[TxRecord, ...]
    key_announcements: tuple[tuple[bytes, bytes], ...]  # (router_pk, B point)
    signature: bytes = b"\x00" * ccip.SIGNATURE_SIZE


def _block_signing_bytes(block: RelayBlock) -> bytes:
    producer = block.producer.encode("utf-8")
    out = [
        struct.pack(">Q", block.height),
        block.parent_hash,
        struct.pack(">Q", block.timestamp),
        struct.pack(">I", len(producer)),
        producer,
        struct.pack(">I", len(block.records)),
    ]
    for record in block.records:
        reason = record.reason.encode("utf-8")
        out.append(bytes([int(record.verdict)]))
        out.append(struct.pack(">I", len(reason)) + reason)
        out.append(record.session_hash)
        out.append(struct.pack(">Q", record.timeout))
        out.append(struct.pack(">I", len(record.frame)) + record.frame)
    out.append(struct.pack(">I", len(block.key_announcements)))
    for router_pk, point in block.key_announcements:
        out.append(router_pk + point)
    return b"".join(out)


def encode_block(block: RelayBlock) -> bytes:
    return _block_signing_bytes(block) + block.signature


def decode_block(raw: bytes) -> RelayBlock:
    reader = ccip.Reader(raw)  # same framing conventions as CCIP
    try:
        height = reader.u64()
        parent_hash = reader.take(32)
        timestamp = reader.u64()
        producer = reader.lp_str()
        records = []
        for _ in range(reader.u32()):
            verdict = Verdict(reader.u8())
            reason = reader.lp_str()
            session_hash = reader.take(32)
            timeout = reader.u64()
            frame = reader.lp_bytes()
            records.append(TxRecord(frame, verdict, reason, session_hash, timeout))
        announcements = []
        for _ in range(reader.u32()):
            announcements.append((reader.take(ccip.POINT_SIZE), reader.take(ccip.POINT_SIZE)))
        signature = reader.take(ccip.SIGNATURE_SIZE)
        reader.expect_end()
    except (ccip.DecodeError, ValueError) as exc:
        raise RelayError(f"bad block encoding: {exc}") from None
    return RelayBlock(
        height, parent_hash, timestamp, producer, tuple(records), tuple(announcements), signature
    )


def block_hash(block: RelayBlock) -> bytes:
    return hashlib.sha256(encode_block(block)).digest()


@dataclass(frozen=True)
class SessionRecord:
    session_hash: bytes
    request_tx_hash: bytes
    src_chain: int
    dst_chain: int
    state: str  # open | responded | expired
    opened_at: int
    timeout: int
    closed_at: Optional[int] = None
    response_tx_hash: Optional[bytes] = None


@dataclass(frozen=True)
class EvidenceEntry:
    """One chain event touching a session, as returned by audit_trail."""

    height: int
    tx_hash: bytes
    kind: str  # request | response | registration
    verdict: str
    reason: str
    timestamp: int
    forwarded: bool


@dataclass(frozen=True)
class RouterRegistration:
    router_public_key: bytes
    chain_id: int
    ipv4: str
    port: int

    @property
    def address(self) -> str:
        return f"{self.ipv4}:{self.port}"


@dataclass(frozen=True)
class SubmitResult:
    accepted: bool
    reason: str
    tx_hash: Optional[bytes] = None


@dataclass(frozen=True)
class RelayNodeConfig:
    node_id: str
    address: str
    role: str  # "validator" | "follower"
    authorities: dict[str, bytes]  # node id -> block-signing public key
    validator_id: str
    batch_max_txs: int = 10
    batch_interval_ms: int = 200
    rotation: bool = False
    router_certificates: frozenset = frozenset()
    chain_dir: Optional[Path] = None
    # test knobs for negative controls; production values are all True
    replay_check: bool = True
    signature_check: bool = True
    certificate_check: bool = True
    ordering: bool = True


@dataclass
class _MempoolEntry:
    tx: ccip.CrossChainTransaction
    frame: bytes
    tx_hash: bytes
    handle: Optional[int]
    received_at: int


class RelayNode:
    """Single logical event loop: feed frames via handle_frame, time via
    on_timer. Sends block broadcasts and forwards through ``send``."""

    def __init__(
        self,
        config: RelayNodeConfig,
        keypair: SigningKeypair,
        enclave: EnclaveInstance,
        send: Callable[[str, bytes], None],
        clock: Callable[[], int],
        peers: tuple[str, ...] = (),
        observer: Callable[[str, dict], None] = lambda _name, _fields: None,
    ) -> None:
        self.config = config
        self.keypair = keypair
        self.enclave = enclave
        self._send = send
        self._clock = clock
        self.peers = peers
        self._observer = observer

        self.mempool: list[_MempoolEntry] = []
        self.chain: list[RelayBlock] = []
        self.registry: dict[int, RouterRegistration] = {}
        self.seen: set[tuple[bytes, int]] = set()
        self.sessions: dict[bytes, SessionRecord] = {}
        self.max_ts1: dict[bytes, int] = {}
        self.submit_log: list[SubmitResult] = []
        self.evidence: dict[bytes, list[EvidenceEntry]] = {}
        self._last_block_ms = 0

        if config.chain_dir is not None:
            config.chain_dir.mkdir(parents=True, exist_ok=True)

    # -- network entry point ----------------------------------------------------

    def handle_frame(self, frame: bytes, now: int) -> None:
        try:
            msg_type, body = wire.open_envelope(frame)
        except wire.WireError as exc:
            logger.debug("%s: dropped frame: %s", self.config.node_id, exc)
            return
        if msg_type is wire.MsgType.SUBMIT:
            self.submit(body, now)
            self.maybe_produce_block(now)
        elif msg_type is wire.MsgType.BLOCK:
            try:
                block = decode_block(body)
            except RelayError as exc:
                logger.warning("%s: bad block: %s", self.config.node_id, exc)
                return
            self.apply_block(block)
        elif msg_type is wire.MsgType.ATTEST_REQ:
            try:
                reply_to = wire.decode_attest_req(body)
            except wire.WireError:
                return
            self._answer_attestation(reply_to)
        else:
            logger.debug("%s: unexpected message type %s", self.config.node_id, msg_type)

    def _answer_attestation(self, reply_to: str) -> None:
        if not self.enclave.has_relay_secret():
            logger.warning("%s: attestation requested before bootstrap", self.config.node_id)
            return
        point, quote = self.enclave.quoted_key_exchange_point()
        self._send(reply_to, wire.encode_attest_resp(point, quote))

    # -- admission ----------------------------------------------------------------

    def submit(self, raw: bytes, now: int) -> SubmitResult:
        """Admit one CCIP frame into the mempool."""
        result = self._admit(raw, now)
        self.submit_log.append(result)
        self._observer(
            "submitted",
            {"tx_hash": result.tx_hash, "accepted": result.accepted, "reason": result.reason, "time": now},
        )
        if not result.accepted:
            logger.info("%s: rejected tx: %s", self.config.node_id, result.reason)
        return result

    def _admit(self, raw: bytes, now: int) -> SubmitResult:
        try:
            tx = ccip.decode(raw)
        except ccip.DecodeError as exc:
            return SubmitResult(False, f"decode-error: {exc}")
        digest = hashlib.sha256(raw).digest()
        key = (tx.header.router_public_key, tx.header.seq_num)
        if self.config.replay_check and key in self.seen:
            return SubmitResult(False, "replay", digest)
        if tx.header.timestamp1 < self.max_ts1.get(tx.header.router_public_key, 0):
            return SubmitResult(False, "out-of-window", digest)
        if self.config.signature_check:
            verdict = ccip.validate_structure(tx, now)
            if not verdict.ok:
                return SubmitResult(False, verdict.status.value, digest)
        if tx.header.tx_type is ccip.TxType.REGISTRATION:
            if self.config.certificate_check and (
                tx.header.router_public_key not in self.config.router_certificates
            ):
                return SubmitResult(False, "unknown-certificate", digest)
            handle = None
        else:
            try:
                handle = self.enclave.enclave_unpack(tx)
            except UnknownRouterError:
                return SubmitResult(False, "unknown-router", digest)
            except RouterSignatureError:
                return SubmitResult(False, "router-signature", digest)
            except PayloadAuthError:
                return SubmitResult(False, "aead-failure", digest)
            except PayloadDecodeError:
                return SubmitResult(False, "payload-decode", digest)
            structural = self.enclave.enclave_validate(handle, now)
            if not structural.ok:
                self.enclave.discard(handle)
                return SubmitResult(False, structural.status.value, digest)
        self.seen.add(key)
        self.mempool.append(_MempoolEntry(tx, raw, digest, handle, now))
        return SubmitResult(True, "accepted", digest)

    # -- block production -------------------------------------------------------------

    @property
    def height(self) -> int:
        return len(self.chain)

    def producer_for_height(self, height: int) -> str:
        if self.config.rotation:
            ids = sorted(self.config.authorities)
            return ids[height % len(ids)]
        return self.config.validator_id

    def maybe_produce_block(self, now: int) -> Optional[RelayBlock]:
        """Produce when the batch fills or the batch interval elapses."""
        if self.producer_for_height(self.height) != self.config.node_id:
            return None
        if not self.mempool:
            return None
        due = now - self._last_block_ms >= self.config.batch_interval_ms
        full = len(self.mempool) >= self.config.batch_max_txs
        if not (due or full):
            return None
        return self.produce_block(now)

    def on_timer(self, now: int) -> Optional[RelayBlock]:
        self.sweep_sessions(now)
        return self.maybe_produce_block(now)

    def produce_block(self, now: int, batch_limit: Optional[int] = None) -> RelayBlock:
        """Verify a batch inside the enclave, record verdicts, forward the
        survivors, and broadcast the block."""
        if self.producer_for_height(self.height) != self.config.node_id:
            raise RelayError(f"{self.config.node_id} is not the scheduled producer")
        limit = batch_limit if batch_limit is not None else self.config.batch_max_txs
        pool = self.mempool
        if self.config.ordering:
            pool = sorted(pool, key=lambda e: (e.tx.header.timestamp1, e.tx.header.seq_num))
        batch, rest = pool[:limit], pool[limit:]
        self.mempool = rest

        records: list[TxRecord] = []
        announcements: list[tuple[bytes, bytes]] = []
        forwards: list[tuple[str, bytes, bytes]] = []
        for entry in batch:
            if entry.tx.header.tx_type is ccip.TxType.REGISTRATION:
                records.append(self._process_registration(entry, announcements))
            else:
                records.append(self._process_cross_chain(entry, now, forwards))

        block = RelayBlock(
            height=self.height,
            parent_hash=block_hash(self.chain[-1]) if self.chain else GENESIS_PARENT,
            timestamp=now,
            producer=self.config.node_id,
            records=tuple(records),
            key_announcements=tuple(announcements),
        )
        block = replace(block, signature=sign(self.keypair, _block_signing_bytes(block)))
        self._append_block(block, replay_state=False)
        self._last_block_ms = now
        self._observer(
            "block",
            {
                "height": block.height,
                "time": now,
                "records": [
                    (hashlib.sha256(r.frame).digest(), r.verdict.label, r.reason)
                    for r in block.records
                ],
            },
        )
        encoded = wire.envelope(wire.MsgType.BLOCK, encode_block(block))
        for peer in self.peers:
            self._send(peer, encoded)
        for address, frame, tx_digest in forwards:
            self._send(address, frame)
            self._observer("forwarded", {"tx_hash": tx_digest, "dst": address, "time": now})
        return block

    def _process_registration(
        self, entry: _MempoolEntry, announcements: list[tuple[bytes, bytes]]
    ) -> TxRecord:
        tx = entry.tx
        assert isinstance(tx.payload, ccip.RegistrationPayload)
        try:
            self.enclave.register_acl(tx.header.src_chain, tx.payload.access_control_table)
            self.enclave.enclave_keyexchange(tx.payload.key_message, tx.header.router_public_key)
        except EnclaveError as exc:
            return TxRecord(entry.frame, Verdict.REJECTED, f"registration: {exc}")
        self.registry[tx.header.src_chain] = RouterRegistration(
            tx.header.router_public_key,
            tx.header.src_chain,
            tx.payload.router_ipv4,
            tx.payload.router_port,
        )
        announcements.append((tx.header.router_public_key, tx.payload.key_message))
        return TxRecord(entry.frame, Verdict.REGISTERED, "registered")

    def _process_cross_chain(
        self, entry: _MempoolEntry, now: int, forwards: list[tuple[str, bytes, bytes]]
    ) -> TxRecord:
        tx = entry.tx
        handle = entry.handle
        if handle is None:
            return TxRecord(entry.frame, Verdict.REJECTED, "missing payload handle")
        verdict = self.enclave.enclave_verify(handle, now)
        linkage = verdict.session_hash or b"\x00" * 32
        if not verdict.allowed:
            self.enclave.discard(handle)
            mapped = {
                "acl-denied": Verdict.DENIED,
                "expired": Verdict.EXPIRED,
            }.get(verdict.reason, Verdict.REJECTED)
            return TxRecord(entry.frame, mapped, verdict.reason, linkage, verdict.timeout)

        # session bookkeeping happens before the forward leg
        if tx.header.tx_type is ccip.TxType.REQUEST:
            session_key = entry.tx_hash
        else:
            session_key = verdict.session_hash or b""
            session = self.sessions.get(session_key)
            if session is None:
                self.enclave.discard(handle)
                return TxRecord(entry.frame, Verdict.REJECTED, "unknown-session", linkage, verdict.timeout)
            if session.state == "responded":
                self.enclave.discard(handle)
                return TxRecord(entry.frame, Verdict.REJECTED, "duplicate-response", linkage, verdict.timeout)
            if session.state == "expired":
                self.enclave.discard(handle)
                return TxRecord(entry.frame, Verdict.REJECTED, "session-expired", linkage, verdict.timeout)

        registration = self.registry.get(tx.header.dst_chain)
        if registration is None:
            self.enclave.discard(handle)
            return TxRecord(entry.frame, Verdict.REJECTED, "unknown-destination", linkage, verdict.timeout)
        try:
            envelope = self.enclave.enclave_reencrypt(handle, registration.router_public_key)
        except EnclaveError as exc:
            return TxRecord(entry.frame, Verdict.REJECTED, f"reencrypt: {exc}", linkage, verdict.timeout)

        if tx.header.tx_type is ccip.TxType.REQUEST:
            self.sessions[session_key] = SessionRecord(
                session_hash=session_key,
                request_tx_hash=entry.tx_hash,
                src_chain=tx.header.src_chain,
                dst_chain=tx.header.dst_chain,
                state="open",
                opened_at=now,
                timeout=verdict.timeout,
            )
        else:
            self.sessions[session_key] = replace(
                self.sessions[session_key],
                state="responded",
                closed_at=now,
                response_tx_hash=entry.tx_hash,
            )
        fwd = wire.ForwardedTx(
            tx_hash=entry.tx_hash,
            src_chain=tx.header.src_chain,
            dst_chain=tx.header.dst_chain,
            tx_type=tx.header.tx_type,
            envelope=envelope,
        )
        forwards.append((registration.address, wire.encode_forward(fwd), entry.tx_hash))
        record_session = session_key if tx.header.tx_type is ccip.TxType.REQUEST else linkage
        return TxRecord(entry.frame, Verdict.VERIFIED, "verified", record_session, verdict.timeout)

    # -- follower-side consensus ---------------------------------------------------------

    def apply_block(self, block: RelayBlock) -> tuple[bool, str]:
        """Validate and apply a broadcast block; followers replay state."""
        if block.height != self.height:
            return False, f"height {block.height}, expected {self.height}"
        expected_parent = block_hash(self.chain[-1]) if self.chain else GENESIS_PARENT
        if block.parent_hash != expected_parent:
            return False, "stale or wrong parent hash"
        producer_key = self.config.authorities.get(block.producer)
        if producer_key is None:
            return False, f"producer {block.producer!r} not in authority set"
        if block.producer != self.producer_for_height(block.height):
            return False, f"producer {block.producer!r} not scheduled for height {block.height}"
        if not verify_sig(producer_key, _block_signing_bytes(block), block.signature):
            return False, "bad producer signature"
        self._append_block(block, replay_state=True)
        return True, "applied"

    def _append_block(self, block: RelayBlock, replay_state: bool) -> None:
        self.chain.append(block)
        for record in block.records:
            digest = hashlib.sha256(record.frame).digest()
            try:
                tx = ccip.decode(record.frame)
            except ccip.DecodeError:
                continue
            self.max_ts1[tx.header.router_public_key] = max(
                self.max_ts1.get(tx.header.router_public_key, 0), tx.header.timestamp1
            )
            if replay_state:
                self.seen.add((tx.header.router_public_key, tx.header.seq_num))
                self._replay_record(block, tx, record, digest)
            self._index_evidence(block, tx, record, digest)
        if replay_state:
            for router_pk, point in block.key_announcements:
                try:
                    self.enclave.enclave_keyexchange(point, router_pk)
                except EnclaveError as exc:
                    logger.warning("%s: key announcement failed: %s", self.config.node_id, exc)
        self._persist_block(block)

    def _replay_record(
        self, block: RelayBlock, tx: ccip.CrossChainTransaction, record: TxRecord, digest: bytes
    ) -> None:
        if record.verdict is Verdict.REGISTERED and isinstance(tx.payload, ccip.RegistrationPayload):
            self.registry[tx.header.src_chain] = RouterRegistration(
                tx.header.router_public_key,
                tx.header.src_chain,
                tx.payload.router_ipv4,
                tx.payload.router_port,
            )
            self.enclave.register_acl(tx.header.src_chain, tx.payload.access_control_table)
        elif record.verdict is Verdict.VERIFIED:
            if tx.header.tx_type is ccip.TxType.REQUEST:
                self.sessions[digest] = SessionRecord(
                    session_hash=digest,
                    request_tx_hash=digest,
                    src_chain=tx.header.src_chain,
                    dst_chain=tx.header.dst_chain,
                    state="open",
                    opened_at=block.timestamp,
                    timeout=record.timeout,
                )
            elif record.session_hash in self.sessions:
                self.sessions[record.session_hash] = replace(
                    self.sessions[record.session_hash],
                    state="responded",
                    closed_at=block.timestamp,
                    response_tx_hash=digest,
                )

    def _index_evidence(
        self, block: RelayBlock, tx: ccip.CrossChainTransaction, record: TxRecord, digest: bytes
    ) -> None:
        kind = {
            ccip.TxType.REGISTRATION: "registration",
            ccip.TxType.REQUEST: "request",
            ccip.TxType.RESPONSE: "response",
        }[tx.header.tx_type]
        if tx.header.tx_type is ccip.TxType.RESPONSE and record.session_hash != b"\x00" * 32:
            session_key = record.session_hash
        else:
            session_key = digest
        entry = EvidenceEntry(
            height=block.height,
            tx_hash=digest,
            kind=kind,
            verdict=record.verdict.label,
            reason=record.reason,
            timestamp=block.timestamp,
            forwarded=record.verdict is Verdict.VERIFIED and kind != "registration",
        )
        self.evidence.setdefault(session_key, []).append(entry)

    # -- sessions and audit ------------------------------------------------------------------

    def sweep_sessions(self, now: int) -> None:
        """Expire open sessions whose timeout has passed."""
        for key, session in list(self.sessions.items()):
            if session.state == "open" and now > session.opened_at + session.timeout:
                self.sessions[key] = replace(session, state="expired", closed_at=now)

    def audit_trail(self, session_hash: bytes) -> list[EvidenceEntry]:
        """Every chain event touching the session, in block order."""
        return list(self.evidence.get(session_hash, ()))

    # -- persistence -----------------------------------------------------------------------------

    def _persist_block(self, block: RelayBlock) -> None:
        if self.config.chain_dir is None:
            return
        raw = encode_block(block)
        with open(self.config.chain_dir / "chain.log", "ab") as fh:
            fh.write(struct.pack(">I", len(raw)) + raw)


def read_chain(path: Path) -> list[RelayBlock]:
    """Load an append-only chain file written by a relay node."""
    blocks = []
    raw = Path(path).read_bytes()
    offset = 0
    while offset < len(raw):
        if offset + 4 > len(raw):
            raise RelayError("truncated chain file")
        size = struct.unpack(">I", raw[offset : offset + 4])[0]
        offset += 4
        if offset + size > len(raw):
            raise RelayError("truncated chain file")
        blocks.append(decode_block(raw[offset : offset + size]))
        offset += size
    return blocks


def build_evidence_index(blocks: list[RelayBlock]) -> dict[bytes, list[EvidenceEntry]]:
    """Rebuild the audit index from persisted blocks (used by the CLI)."""
    index: dict[bytes, list[EvidenceEntry]] = {}
    for block in blocks:
        for record in block.records:
            digest = hashlib.sha256(record.frame).digest()
            try:
                tx = ccip.decode(record.frame)
            except ccip.DecodeError:
                continue
            kind = {
                ccip.TxType.REGISTRATION: "registration",
                ccip.TxType.REQUEST: "request",
                ccip.TxType.RESPONSE: "response",
            }[tx.header.tx_type]
            if tx.header.tx_type is ccip.TxType.RESPONSE and record.session_hash != b"\x00" * 32:
                session_key = record.session_hash
            else:
                session_key = digest
            index.setdefault(session_key, []).append(
                EvidenceEntry(
                    height=block.height,
                    tx_hash=digest,
                    kind=kind,
                    verdict=record.verdict.label,
                    reason=record.reason,
                    timestamp=block.timestamp,
                    forwarded=record.verdict is Verdict.VERIFIED and kind != "registration",
                )
            )
    return index


def bootstrap_secret(
    nodes: list["RelayNode"],
    field_params: FieldParams,
    rng: Random,
    authority_public_key: bytes,
    *,
    offline: tuple[str, ...] = (),
    share_tamper=None,
) -> None:
    """Phase-1 initialization: establish the shared relay secret in every
    reachable node's enclave via verifiable secret sharing."""
    if not nodes:
        raise BootstrapError("no relay nodes")
    names = [node.config.node_id for node in nodes]
    reachable = [name not in offline for name in names]
    bootstrap_relay_secret(
        [node.enclave for node in nodes],
        field_params,
        rng,
        authority_public_key,
        node_names=names,
        reachable=reachable,
        share_tamper=share_tamper,
    )
