"""Per-parachain router: the authority node bridging its chain to the relay.

A router registers with the relay (verifying the validator enclave's
attestation before exchanging keys), listens for hub events, packs them
into encrypted CCIP transactions, executes inbound forwarded requests
against the local parachain, and emits responses that close sessions.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from random import Random
from typing import Callable, Optional

from crossrelay import ccip, wire
from crossrelay.acl import AccessRule
from crossrelay.crypto.aead import AuthenticationError, NonceSequence, aead_decrypt, aead_encrypt
from crossrelay.crypto.curve import SECP256K1, CurveError, CurveParams
from crossrelay.crypto.ecdh import CommunicationKey, KeyExchangeMessage, ecdh_derive
from crossrelay.crypto.signing import SigningKeypair, sign, verify_sig
from crossrelay.enclave import bind_report_data, verify_quote

logger = logging.getLogger(__name__)

RELAY_CHAIN_ID = 0


class RouterError(RuntimeError):
    pass


class NotRegisteredError(RouterError):
    """The router has no communication key yet."""


@dataclass(frozen=True)
class CrossChainEvent:
    """A hub-published event carrying everything a request payload needs."""

    src_contract: str
    dst_chain: int
    dst_contract: str
    originator_public_key: bytes
    originator_signature: bytes
    input: ccip.Call
    callback: ccip.Call
    timeout: int
    timestamp2: int


def event_signing_bytes(event: CrossChainEvent) -> bytes:
    """Events are signed exactly like the request payload they become
    (session hash still zero at emission time)."""
    return ccip.payload_signing_bytes(
        ccip.CrossChainPayload(
            src_contract=event.src_contract,
            dst_contract=event.dst_contract,
            timestamp2=event.timestamp2,
            originator_public_key=event.originator_public_key,
            originator_signature=b"\x00" * ccip.SIGNATURE_SIZE,
            session_hash=ccip.ZERO_SESSION,
            timeout=event.timeout,
            input=event.input,
            callback=event.callback,
            extra=b"",
        )
    )


def make_event(
    originator: SigningKeypair,
    src_contract: str,
    dst_chain: int,
    dst_contract: str,
    input_call: ccip.Call,
    callback: ccip.Call,
    timeout: int,
    timestamp2: int,
) -> CrossChainEvent:
    """Build and originator-sign a cross-chain event."""
    unsigned = CrossChainEvent(
        src_contract=src_contract,
        dst_chain=dst_chain,
        dst_contract=dst_contract,
        originator_public_key=originator.public,
        originator_signature=b"\x00" * ccip.SIGNATURE_SIZE,
        input=input_call,
        callback=callback,
        timeout=timeout,
        timestamp2=timestamp2,
    )
    return replace(unsigned, originator_signature=sign(originator, event_signing_bytes(unsigned)))


def encode_result(ok: bool, data: bytes) -> bytes:
    """Execution result convention: status byte then the value or error text."""
    return (b"\x01" if ok else b"\x00") + data


def decode_result(raw: bytes) -> tuple[bool, bytes]:
    if not raw:
        return False, b""
    return raw[0] == 1, raw[1:]


@dataclass(frozen=True)
class RouterConfig:
    chain_id: int
    ipv4: str
    port: int
    relay_address: str
    authority_public_key: bytes
    expected_measurement: bytes
    verify_attestation: bool = True  # test knob: False disables the MITM defense
    state_path: Optional[Path] = None

    @property
    def address(self) -> str:
        return f"{self.ipv4}:{self.port}"


@dataclass
class PendingSession:
    callback: ccip.Call
    deadline: int
    dst_chain: int


Observer = Callable[[str, dict], None]


def _noop_observer(_name: str, _fields: dict) -> None:
    pass


class Router:
    """Event-loop actor: feed it network frames and hub events."""

    def __init__(
        self,
        config: RouterConfig,
        keypair: SigningKeypair,
        send: Callable[[str, bytes], None],
        clock: Callable[[], int],
        rng: Random,
        parachain=None,
        acl_rules: tuple[AccessRule, ...] = (),
        curve: CurveParams = SECP256K1,
        observer: Observer = _noop_observer,
    ) -> None:
        self.config = config
        self.keypair = keypair
        self._send = send
        self._clock = clock
        self._rng = rng
        self.parachain = parachain
        self.acl_rules = acl_rules
        self._curve = curve
        self._observer = observer

        self.comm_key: Optional[CommunicationKey] = None
        self.registered = False
        self.abort_reason: Optional[str] = None
        self.seq_num = 0
        self.pending: dict[bytes, PendingSession] = {}
        self._nonces = NonceSequence(0)
        self.executed_requests: list[bytes] = []
        self.dropped: list[tuple[str, bytes]] = []

        if config.state_path is not None:
            self._load_state()

    # -- registration (phase 2 of key management) ------------------------------

    def start_registration(self) -> None:
        """Ask the validator for its attested key-exchange point."""
        self.abort_reason = None
        self._send(self.config.relay_address, wire.encode_attest_req(self.config.address))

    def handle_attest_response(self, point_bytes: bytes, quote) -> None:
        """Verify the validator quote, derive the communication key, and
        submit the registration transaction."""
        if self.config.verify_attestation:
            if not verify_quote(
                quote,
                self.config.expected_measurement,
                bind_report_data(point_bytes),
                self.config.authority_public_key,
            ):
                self.abort_reason = "attestation-failed"
                self.registered = False
                self._observer("registration_aborted", {"reason": self.abort_reason})
                logger.warning("chain %d: registration aborted, attestation failed", self.config.chain_id)
                return
        try:
            validator_point = KeyExchangeMessage.decode(self._curve, point_bytes)
        except CurveError:
            self.abort_reason = "invalid-point"
            self.registered = False
            return
        b_scalar = self._rng.randrange(1, self._curve.n)
        self.comm_key = ecdh_derive(self._curve, b_scalar, validator_point)
        self._nonces = NonceSequence(0)
        b_point = self._curve.mul_base(b_scalar)
        assert b_point is not None
        from crossrelay.crypto.curve import encode_point

        payload = ccip.RegistrationPayload(
            key_message=encode_point(self._curve, b_point),
            router_ipv4=self.config.ipv4,
            router_port=self.config.port,
            access_control_table=self.acl_rules,
        )
        header = ccip.CcipHeader(
            src_chain=self.config.chain_id,
            dst_chain=RELAY_CHAIN_ID,
            tx_type=ccip.TxType.REGISTRATION,
            seq_num=self._next_seq(),
            timestamp1=self._clock(),
            router_public_key=self.keypair.public,
        )
        tx = ccip.sign_transaction(self.keypair, header, payload)
        self.registered = True
        self._observer("registered", {"chain": self.config.chain_id})
        self._send(self.config.relay_address, wire.envelope(wire.MsgType.SUBMIT, ccip.encode(tx)))
        self._persist_state()

    # -- outbound: hub event -> request transaction ---------------------------------

    def pack(self, event: CrossChainEvent) -> ccip.CrossChainTransaction:
        """Build, encrypt, and sign a request transaction from a hub event."""
        if self.comm_key is None:
            raise NotRegisteredError("router has no communication key; register first")
        if not verify_sig(
            event.originator_public_key, event_signing_bytes(event), event.originator_signature
        ):
            raise RouterError("event originator signature does not verify; refusing to pack")
        payload = ccip.CrossChainPayload(
            src_contract=event.src_contract,
            dst_contract=event.dst_contract,
            timestamp2=event.timestamp2,
            originator_public_key=event.originator_public_key,
            originator_signature=event.originator_signature,
            session_hash=ccip.ZERO_SESSION,
            timeout=event.timeout,
            input=event.input,
            callback=event.callback,
            extra=b"",
        )
        header = ccip.CcipHeader(
            src_chain=self.config.chain_id,
            dst_chain=event.dst_chain,
            tx_type=ccip.TxType.REQUEST,
            seq_num=self._next_seq(),
            timestamp1=self._clock(),
            router_public_key=self.keypair.public,
        )
        nonce = self._nonces.next()
        ciphertext = aead_encrypt(
            self.comm_key, nonce, ccip.encode_payload(payload), ccip.header_aad(header)
        )
        tx = ccip.sign_transaction(self.keypair, header, ccip.EncryptedEnvelope(nonce, ciphertext))
        if not event.callback.is_empty:
            self.pending[ccip.tx_hash(tx)] = PendingSession(
                callback=event.callback,
                deadline=event.timestamp2 + event.timeout,
                dst_chain=event.dst_chain,
            )
        self._persist_state()
        return tx

    def on_event(self, event: CrossChainEvent) -> bytes:
        """Pack a hub event and submit it to the relay; returns the tx hash."""
        tx = self.pack(event)
        digest = ccip.tx_hash(tx)
        self._observer(
            "packed",
            {"tx_hash": digest, "event": event, "seq": tx.header.seq_num, "time": self._clock()},
        )
        self._send(self.config.relay_address, wire.envelope(wire.MsgType.SUBMIT, ccip.encode(tx)))
        return digest

    # -- inbound: forwarded transactions from the relay ------------------------------

    def handle_frame(self, frame: bytes, _now: int) -> None:
        """Network entry point for anything addressed to this router."""
        try:
            msg_type, body = wire.open_envelope(frame)
        except wire.WireError as exc:
            self.dropped.append(("bad-envelope", frame))
            logger.debug("chain %d: dropped frame: %s", self.config.chain_id, exc)
            return
        if msg_type is wire.MsgType.ATTEST_RESP:
            try:
                point, quote = wire.decode_attest_resp(body)
            except wire.WireError:
                self.dropped.append(("bad-attest-resp", frame))
                return
            self.handle_attest_response(point, quote)
        elif msg_type is wire.MsgType.FORWARD:
            try:
                fwd = wire.decode_forward(body)
            except wire.WireError:
                self.dropped.append(("bad-forward", frame))
                return
            if fwd.tx_type is ccip.TxType.REQUEST:
                self.execute_inbound(fwd)
            else:
                self.handle_response(fwd)
        else:
            self.dropped.append(("unexpected-type", frame))

    def _decrypt_forward(self, fwd: wire.ForwardedTx) -> Optional[ccip.CrossChainPayload]:
        if self.comm_key is None:
            self.dropped.append(("not-registered", fwd.tx_hash))
            return None
        aad = ccip.forward_aad(fwd.tx_hash, fwd.src_chain, fwd.dst_chain, fwd.tx_type)
        try:
            plaintext = aead_decrypt(self.comm_key, fwd.envelope.nonce, fwd.envelope.ciphertext, aad)
        except AuthenticationError:
            self.dropped.append(("aead-failure", fwd.tx_hash))
            self._observer("forward_rejected", {"reason": "aead-failure"})
            return None
        try:
            return ccip.decode_payload(plaintext)
        except ccip.DecodeError:
            self.dropped.append(("payload-decode", fwd.tx_hash))
            return None

    def execute_inbound(self, fwd: wire.ForwardedTx) -> None:
        """Execute a forwarded request locally and respond after the next
        parachain block confirms the execution."""
        payload = self._decrypt_forward(fwd)
        if payload is None:
            return
        now = self._clock()
        try:
            value = self.parachain.execute(
                payload.dst_contract, payload.input.function, payload.input.args
            )
            result = encode_result(True, value)
        except Exception as exc:  # contract failure still travels back
            result = encode_result(False, str(exc).encode("utf-8"))
        self.executed_requests.append(fwd.tx_hash)
        self._observer(
            "executed",
            {"request_hash": fwd.tx_hash, "result": result, "time": now},
        )
        if payload.callback.is_empty:
            return
        response_ready = self._build_response(fwd, payload, result)
        # local confirmation first: respond at the next parachain block
        self.parachain.on_next_block(response_ready)

    def _build_response(
        self, fwd: wire.ForwardedTx, request: ccip.CrossChainPayload, result: bytes
    ) -> Callable[[], None]:
        def send_response() -> None:
            if self.comm_key is None:
                return
            now = self._clock()
            unsigned = ccip.CrossChainPayload(
                src_contract=request.dst_contract,
                dst_contract=request.src_contract,
                timestamp2=now,
                originator_public_key=self.keypair.public,
                originator_signature=b"\x00" * ccip.SIGNATURE_SIZE,
                session_hash=fwd.tx_hash,
                timeout=request.timeout,
                input=ccip.Call(
                    request.callback.function, tuple(request.callback.args) + (result,)
                ),
                callback=ccip.Call.empty(),  # empty callback closes the session
                extra=b"",
            )
            payload = replace(
                unsigned,
                originator_signature=sign(self.keypair, ccip.payload_signing_bytes(unsigned)),
            )
            header = ccip.CcipHeader(
                src_chain=self.config.chain_id,
                dst_chain=fwd.src_chain,
                tx_type=ccip.TxType.RESPONSE,
                seq_num=self._next_seq(),
                timestamp1=now,
                router_public_key=self.keypair.public,
            )
            nonce = self._nonces.next()
            ciphertext = aead_encrypt(
                self.comm_key, nonce, ccip.encode_payload(payload), ccip.header_aad(header)
            )
            tx = ccip.sign_transaction(
                self.keypair, header, ccip.EncryptedEnvelope(nonce, ciphertext)
            )
            self._observer(
                "response_sent",
                {"request_hash": fwd.tx_hash, "tx_hash": ccip.tx_hash(tx), "time": now},
            )
            self._send(self.config.relay_address, wire.envelope(wire.MsgType.SUBMIT, ccip.encode(tx)))
            self._persist_state()

        return send_response

    def handle_response(self, fwd: wire.ForwardedTx) -> None:
        """Invoke the stored callback for a matching session, exactly once."""
        payload = self._decrypt_forward(fwd)
        if payload is None:
            return
        session = self.pending.pop(payload.session_hash, None)
        if session is None:
            self.dropped.append(("unknown-session", payload.session_hash))
            self._observer(
                "response_dropped",
                {"reason": "unknown-session", "session_hash": payload.session_hash},
            )
            return
        now = self._clock()
        if now > session.deadline:
            self.dropped.append(("expired-session", payload.session_hash))
            self._observer(
                "response_dropped",
                {"reason": "expired-session", "session_hash": payload.session_hash},
            )
            self._persist_state()
            return
        try:
            self.parachain.execute(
                payload.dst_contract, payload.input.function, payload.input.args
            )
            self._observer(
                "callback_executed",
                {"session_hash": payload.session_hash, "time": now, "call": payload.input},
            )
        except Exception as exc:
            self.dropped.append(("callback-error", payload.session_hash))
            logger.warning("chain %d: callback failed: %s", self.config.chain_id, exc)
        self._persist_state()

    # -- internals -----------------------------------------------------------------

    def _next_seq(self) -> int:
        self.seq_num += 1
        return self.seq_num

    def _persist_state(self) -> None:
        if self.config.state_path is None:
            return
        state = {
            "seq_num": self.seq_num,
            "pending": {
                h.hex(): {
                    "function": s.callback.function,
                    "args": [a.hex() for a in s.callback.args],
                    "deadline": s.deadline,
                    "dst_chain": s.dst_chain,
                }
                for h, s in self.pending.items()
            },
        }
        self.config.state_path.write_text(json.dumps(state, sort_keys=True))

    def _load_state(self) -> None:
        path = self.config.state_path
        if path is None or not path.exists():
            return
        state = json.loads(path.read_text())
        self.seq_num = int(state.get("seq_num", 0))
        for hex_hash, raw in state.get("pending", {}).items():
            self.pending[bytes.fromhex(hex_hash)] = PendingSession(
                callback=ccip.Call(raw["function"], tuple(bytes.fromhex(a) for a in raw["args"])),
                deadline=int(raw["deadline"]),
                dst_chain=int(raw["dst_chain"]),
            )
