"""Simulated trusted-execution enclave for relay chain nodes.

An ``EnclaveInstance`` is an enforced boundary: the relay secret, the
per-router communication keys, and decrypted payloads live inside it and
never cross out. Public operations return only verdicts, opaque handles,
quotes, sealed blobs, public points, and ciphertexts.

The platform stands in for the TEE hardware: it roots the seal keys and
signs attestation quotes with a configurable authority keypair that
plays the role of the vendor's attestation service. Measurements are
hashes of a build identifier string.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Optional

from crossrelay import ccip
from crossrelay.acl import AccessRequest, AccessRule, AclStore
from crossrelay.crypto.aead import AuthenticationError, NonceSequence, aead_decrypt, aead_encrypt
from crossrelay.crypto.curve import SECP256K1, CurveError, CurveParams
from crossrelay.crypto.ecdh import CommunicationKey, KeyExchangeMessage, ecdh_derive, ecdh_respond
from crossrelay.crypto.field import FieldParams
from crossrelay.crypto.signing import SigningKeypair, sign, verify_sig
from crossrelay.crypto.vss import (
    CommitmentVector,
    Share,
    vss_check_secret,
    vss_deal,
    vss_recover,
    vss_verify_share,
)

MEASUREMENT_SIZE = 32
PLATFORM_ID_SIZE = 16
REPORT_DATA_SIZE = 64

_SEAL_MAGIC = b"crossrelay/seal/v1"


class EnclaveError(Exception):
    """Base class for enclave failures."""


class UnknownRouterError(EnclaveError):
    """No communication key is registered for the router."""


class RouterSignatureError(EnclaveError):
    """The router signature on a transaction does not verify."""


class PayloadAuthError(EnclaveError):
    """AEAD authentication of the payload failed."""


class PayloadDecodeError(EnclaveError):
    """The decrypted payload does not parse."""


class SealError(EnclaveError):
    """Seal policy or identity mismatch, or a tampered blob."""


class StaleHandleError(EnclaveError):
    """The payload handle is unknown or already consumed."""


class BootstrapError(EnclaveError):
    """Relay-secret establishment failed."""

    def __init__(self, message: str, offender: Optional[str] = None) -> None:
        super().__init__(message)
        self.offender = offender


class SealPolicy:
    ENCLAVE = 0
    SIGNING = 1


@dataclass(frozen=True)
class SealedBlob:
    """Sealed secret: policy byte, nonce, ciphertext+tag."""

    policy: int
    nonce: bytes
    ciphertext: bytes

    def encode(self) -> bytes:
        return (
            bytes([self.policy])
            + self.nonce
            + len(self.ciphertext).to_bytes(4, "big")
            + self.ciphertext
        )

    @classmethod
    def decode(cls, raw: bytes) -> "SealedBlob":
        if len(raw) < 1 + 12 + 4:
            raise SealError("sealed blob too short")
        policy = raw[0]
        nonce = raw[1:13]
        size = int.from_bytes(raw[13:17], "big")
        ciphertext = raw[17:]
        if len(ciphertext) != size:
            raise SealError("sealed blob length mismatch")
        return cls(policy, nonce, ciphertext)


@dataclass(frozen=True)
class AttestationQuote:
    """Signed evidence of an enclave's code identity, binding a message."""

    measurement: bytes
    platform_id: bytes
    report_data: bytes
    signature: bytes


@dataclass(frozen=True)
class KeyExchangeAck:
    """Acknowledgment that a communication key was derived and stored."""

    router_public_key: bytes


@dataclass(frozen=True)
class VerifyVerdict:
    """Outcome of in-enclave verification, plus the non-confidential
    routing metadata the relay needs for sessions and expiry."""

    allowed: bool
    reason: str
    session_hash: Optional[bytes] = None
    timeout: int = 0


def bind_report_data(message: bytes) -> bytes:
    """64-byte report_data binding an arbitrary message into a quote."""
    return hashlib.sha256(message).digest() + b"\x00" * 32


def measurement_of(build_id: str) -> bytes:
    return hashlib.sha256(b"crossrelay/enclave-build:" + build_id.encode("utf-8")).digest()


def signer_identity_of(vendor: str) -> bytes:
    return hashlib.sha256(b"crossrelay/enclave-signer:" + vendor.encode("utf-8")).digest()


class EnclavePlatform:
    """One TEE-enabled host: seal-key root and quoting infrastructure.

    ``authority`` is the attestation authority's signing keypair; hosts
    that do not hold it (an attacker's machine) cannot produce quotes
    that verify against the authority's public key.
    """

    def __init__(
        self,
        platform_id: bytes,
        platform_secret: bytes,
        authority: Optional[SigningKeypair] = None,
    ) -> None:
        if len(platform_id) != PLATFORM_ID_SIZE:
            raise EnclaveError(f"platform id must be {PLATFORM_ID_SIZE} bytes")
        self.platform_id = platform_id
        self._platform_secret = platform_secret
        self._authority = authority

    @classmethod
    def create(cls, rng: Random, authority: Optional[SigningKeypair] = None) -> "EnclavePlatform":
        return cls(
            platform_id=rng.getrandbits(PLATFORM_ID_SIZE * 8).to_bytes(PLATFORM_ID_SIZE, "big"),
            platform_secret=rng.getrandbits(256).to_bytes(32, "big"),
            authority=authority,
        )

    def seal_key(self, policy: int, identity: bytes) -> bytes:
        label = b"seal-enclave" if policy == SealPolicy.ENCLAVE else b"seal-signing"
        return hmac.new(self._platform_secret, label + identity, hashlib.sha256).digest()

    def quote(self, measurement: bytes, report_data: bytes) -> AttestationQuote:
        if self._authority is None:
            raise EnclaveError("platform has no attestation authority key")
        signature = sign(self._authority, measurement + self.platform_id + report_data)
        return AttestationQuote(measurement, self.platform_id, report_data, signature)


def verify_quote(
    quote: AttestationQuote,
    expected_measurement: bytes,
    expected_report_data: bytes,
    authority_public_key: bytes,
) -> bool:
    """Check authority signature, code identity, and bound message."""
    if quote.measurement != expected_measurement:
        return False
    if quote.report_data != expected_report_data:
        return False
    if len(quote.platform_id) != PLATFORM_ID_SIZE or len(quote.report_data) != REPORT_DATA_SIZE:
        return False
    return verify_sig(
        authority_public_key,
        quote.measurement + quote.platform_id + quote.report_data,
        quote.signature,
        SECP256K1,
    )


@dataclass
class _OpenPayload:
    header: ccip.CcipHeader
    tx_hash: bytes
    payload: ccip.CrossChainPayload
    verified: bool = False


class EnclaveInstance:
    """Relay-node enclave: key material and decrypted payloads stay inside.

    One instance per relay node; calls on a single instance are expected
    to be serialized by the owning node's event loop.
    """

    def __init__(
        self,
        platform: EnclavePlatform,
        build_id: str = "crossrelay-relay-enclave-v1",
        vendor: str = "crossrelay-dev",
        curve: CurveParams = SECP256K1,
        seal_dir: Optional[Path] = None,
        rng: Optional[Random] = None,
        acl_check_enabled: bool = True,
        allow_introspection: bool = False,
    ) -> None:
        self._platform = platform
        self.measurement = measurement_of(build_id)
        self.signing_identity = signer_identity_of(vendor)
        self._curve = curve
        self._seal_dir = Path(seal_dir) if seal_dir is not None else None
        self._rng = rng if rng is not None else Random()
        self._acl_check_enabled = acl_check_enabled
        self._allow_introspection = allow_introspection

        self._relay_secret: Optional[int] = None
        self._field: Optional[FieldParams] = None
        self._comm_keys: dict[bytes, CommunicationKey] = {}
        self._reencrypt_nonces: dict[bytes, NonceSequence] = {}
        self._acl = AclStore()
        self._open: dict[int, _OpenPayload] = {}
        self._next_handle = 1

        if self._seal_dir is not None:
            self._restore_sealed_state()

    # -- attestation ---------------------------------------------------------

    def produce_quote(self, report_data: bytes) -> AttestationQuote:
        if len(report_data) != REPORT_DATA_SIZE:
            raise EnclaveError(f"report data must be {REPORT_DATA_SIZE} bytes")
        return self._platform.quote(self.measurement, report_data)

    # -- sealing --------------------------------------------------------------

    def seal(self, policy: int, plaintext: bytes) -> SealedBlob:
        if policy not in (SealPolicy.ENCLAVE, SealPolicy.SIGNING):
            raise SealError(f"unknown seal policy {policy}")
        identity = self.measurement if policy == SealPolicy.ENCLAVE else self.signing_identity
        key = self._platform.seal_key(policy, identity)
        nonce = self._rng.getrandbits(96).to_bytes(12, "big")
        ciphertext = aead_encrypt(key, nonce, plaintext, _SEAL_MAGIC + bytes([policy]))
        return SealedBlob(policy, nonce, ciphertext)

    def unseal(self, blob: SealedBlob) -> bytes:
        if blob.policy not in (SealPolicy.ENCLAVE, SealPolicy.SIGNING):
            raise SealError(f"unknown seal policy {blob.policy}")
        identity = self.measurement if blob.policy == SealPolicy.ENCLAVE else self.signing_identity
        key = self._platform.seal_key(blob.policy, identity)
        try:
            return aead_decrypt(key, blob.nonce, blob.ciphertext, _SEAL_MAGIC + bytes([blob.policy]))
        except AuthenticationError:
            raise SealError("seal identity mismatch or tampered blob") from None

    # -- phase 2: key exchange -------------------------------------------------

    def key_exchange_point(self) -> bytes:
        """A = s*G, the enclave's public half of the exchange."""
        if self._relay_secret is None:
            raise EnclaveError("relay secret not established")
        scalar = self._relay_secret % self._curve.n
        return ecdh_respond(self._curve, scalar).encode()

    def quoted_key_exchange_point(self) -> tuple[bytes, AttestationQuote]:
        """The A point together with a quote binding it, for registration."""
        point = self.key_exchange_point()
        return point, self.produce_quote(bind_report_data(point))

    def enclave_keyexchange(
        self, router_point: bytes | KeyExchangeMessage, router_public_key: bytes
    ) -> KeyExchangeAck:
        """Derive and store the communication key for a router's B point."""
        if self._relay_secret is None:
            raise EnclaveError("relay secret not established")
        if isinstance(router_point, KeyExchangeMessage):
            message = router_point
        else:
            try:
                message = KeyExchangeMessage.decode(self._curve, router_point)
            except CurveError as exc:
                raise EnclaveError(f"invalid key-exchange point: {exc}") from None
        key = ecdh_derive(self._curve, self._relay_secret % self._curve.n, message)
        if self._comm_keys.get(router_public_key) != key:
            # fresh key: new nonce counter; never reset a live sequence
            self._comm_keys[router_public_key] = key
            self._reencrypt_nonces[router_public_key] = NonceSequence(1)
            self._persist_sealed_state()
        return KeyExchangeAck(router_public_key=router_public_key)

    def knows_router(self, router_public_key: bytes) -> bool:
        return router_public_key in self._comm_keys

    # -- access control ----------------------------------------------------------

    def register_acl(self, chain: int, rules: tuple[AccessRule, ...]) -> bool:
        self._acl.register_table(chain, rules)
        return True

    # -- payload pipeline: unpack, verify, re-encrypt ------------------------------

    def enclave_unpack(self, tx: ccip.CrossChainTransaction) -> int:
        """Check the router signature, decrypt, and retain the payload
        internally; returns an opaque handle."""
        key = self._comm_keys.get(tx.header.router_public_key)
        if key is None:
            raise UnknownRouterError("no communication key for this router")
        if not isinstance(tx.payload, ccip.EncryptedEnvelope):
            raise PayloadDecodeError("only encrypted payloads cross the enclave boundary")
        payload_bytes = ccip.encode_payload_envelope(tx.header.tx_type, tx.payload)
        if not verify_sig(
            tx.header.router_public_key,
            ccip.header_signing_bytes(tx.header, payload_bytes),
            tx.header.signature,
            self._curve,
        ):
            raise RouterSignatureError("router signature does not verify")
        try:
            plaintext = aead_decrypt(
                key, tx.payload.nonce, tx.payload.ciphertext, ccip.header_aad(tx.header)
            )
        except AuthenticationError:
            raise PayloadAuthError("payload failed AEAD authentication") from None
        try:
            payload = ccip.decode_payload(plaintext)
        except ccip.DecodeError as exc:
            raise PayloadDecodeError(f"payload does not parse: {exc}") from None
        handle = self._next_handle
        self._next_handle += 1
        self._open[handle] = _OpenPayload(tx.header, ccip.tx_hash(tx), payload)
        return handle

    def enclave_validate(self, handle: int, now: int) -> ccip.ValidationResult:
        """Payload-level structural validity (session-hash rule, expiry)."""
        entry = self._entry(handle)
        # router signature was already checked at unpack; only payload rules here
        if entry.header.tx_type is ccip.TxType.REQUEST and entry.payload.session_hash != ccip.ZERO_SESSION:
            return ccip.ValidationResult(
                ccip.Validity.MALFORMED, "request opening a session must carry a zero session hash"
            )
        if entry.header.tx_type is ccip.TxType.RESPONSE and entry.payload.session_hash == ccip.ZERO_SESSION:
            return ccip.ValidationResult(ccip.Validity.MALFORMED, "response must reference a session hash")
        if now > entry.payload.timestamp2 + entry.payload.timeout:
            return ccip.ValidationResult(ccip.Validity.EXPIRED, "transaction past its timeout")
        return ccip.ValidationResult(ccip.Validity.OK)

    def enclave_verify(self, handle: int, now: int) -> VerifyVerdict:
        """Originator signature, structural rules, and access permission."""
        entry = self._entry(handle)
        payload = entry.payload
        linkage = payload.session_hash if entry.header.tx_type is ccip.TxType.RESPONSE else None
        if not verify_sig(
            payload.originator_public_key,
            ccip.payload_signing_bytes(payload),
            payload.originator_signature,
            self._curve,
        ):
            return VerifyVerdict(False, "originator-signature", linkage, payload.timeout)
        structural = self.enclave_validate(handle, now)
        if not structural.ok:
            return VerifyVerdict(False, structural.status.value, linkage, payload.timeout)
        if self._acl_check_enabled and not self._acl.check(self._project(entry)):
            return VerifyVerdict(False, "acl-denied", linkage, payload.timeout)
        entry.verified = True
        return VerifyVerdict(True, "verified", linkage, payload.timeout)

    def enclave_reencrypt(self, handle: int, dst_router_public_key: bytes) -> ccip.EncryptedEnvelope:
        """Re-encrypt a verified payload under the destination router's key."""
        entry = self._entry(handle)
        if not entry.verified:
            raise EnclaveError("payload handle has not passed verification")
        key = self._comm_keys.get(dst_router_public_key)
        if key is None:
            raise UnknownRouterError("no communication key for destination router")
        nonce = self._reencrypt_nonces[dst_router_public_key].next()
        aad = ccip.forward_aad(
            entry.tx_hash, entry.header.src_chain, entry.header.dst_chain, entry.header.tx_type
        )
        ciphertext = aead_encrypt(key, nonce, ccip.encode_payload(entry.payload), aad)
        del self._open[handle]
        self._persist_sealed_state()  # keeps nonce counters fresh across restarts
        return ccip.EncryptedEnvelope(nonce, ciphertext)

    def discard(self, handle: int) -> None:
        self._open.pop(handle, None)

    # -- test-only introspection port ------------------------------------------------
    # Excluded from normal builds: constructing the enclave without
    # allow_introspection leaves no way to read payloads back out.

    def introspect_payload(self, handle: int) -> ccip.CrossChainPayload:
        if not self._allow_introspection:
            raise EnclaveError("introspection port disabled in this build")
        return self._entry(handle).payload

    @property
    def introspection_enabled(self) -> bool:
        return self._allow_introspection

    # -- internals ---------------------------------------------------------------------

    def _entry(self, handle: int) -> _OpenPayload:
        entry = self._open.get(handle)
        if entry is None:
            raise StaleHandleError(f"unknown payload handle {handle}")
        return entry

    def _project(self, entry: _OpenPayload) -> AccessRequest:
        """Project a payload onto the ACL dimensions.

        read/write calls name their key as the resource path; any other
        function is an "invoke" of the function name itself.
        """
        call = entry.payload.input
        if call.function in ("read", "write") and call.args:
            operation = call.function
            path = call.args[0].decode("utf-8", errors="replace")
        elif call.function in ("read", "write"):
            operation = call.function
            path = ""
        else:
            operation = "invoke"
            path = call.function
        return AccessRequest(
            resource_blockchain=entry.header.dst_chain,
            requesting_blockchain=entry.header.src_chain,
            contract=entry.payload.dst_contract,
            resource_path=path,
            operation=operation,
            user=entry.payload.originator_public_key,
        )

    # -- phase 1: relay-secret installation (called by the bootstrap protocol) ---------

    def _install_relay_secret(self, secret: int, field_params: FieldParams) -> None:
        self._relay_secret = secret
        self._field = field_params
        self._persist_sealed_state()

    def has_relay_secret(self) -> bool:
        return self._relay_secret is not None

    # -- sealed persistence --------------------------------------------------------------

    def _persist_sealed_state(self) -> None:
        if self._seal_dir is None:
            return
        self._seal_dir.mkdir(parents=True, exist_ok=True)
        state = bytearray()
        secret = self._relay_secret if self._relay_secret is not None else 0
        state += (1 if self._relay_secret is not None else 0).to_bytes(1, "big")
        state += secret.to_bytes(64, "big")
        state += len(self._comm_keys).to_bytes(4, "big")
        for router_pk, key in sorted(self._comm_keys.items()):
            counter = self._reencrypt_nonces[router_pk].counter
            state += router_pk + key.key + counter.to_bytes(8, "big")
        blob = self.seal(SealPolicy.ENCLAVE, bytes(state))
        (self._seal_dir / "state.sealed").write_bytes(blob.encode())

    def _restore_sealed_state(self) -> None:
        assert self._seal_dir is not None
        path = self._seal_dir / "state.sealed"
        if not path.exists():
            return
        state = self.unseal(SealedBlob.decode(path.read_bytes()))
        has_secret = state[0]
        if has_secret:
            self._relay_secret = int.from_bytes(state[1:65], "big")
        count = int.from_bytes(state[65:69], "big")
        offset = 69
        for _ in range(count):
            router_pk = bytes(state[offset : offset + ccip.POINT_SIZE])
            offset += ccip.POINT_SIZE
            key = bytes(state[offset : offset + 32])
            offset += 32
            counter = int.from_bytes(state[offset : offset + 8], "big")
            offset += 8
            self._comm_keys[router_pk] = CommunicationKey(key)
            self._reencrypt_nonces[router_pk] = NonceSequence(1, start=counter)


def bootstrap_relay_secret(
    enclaves: list[EnclaveInstance],
    field_params: FieldParams,
    rng: Random,
    authority_public_key: bytes,
    *,
    node_names: Optional[list[str]] = None,
    reachable: Optional[list[bool]] = None,
    share_tamper=None,
) -> CommitmentVector:
    """Establish one shared relay secret across all reachable enclaves.

    The first enclave acts as the dealer: it draws a 256-bit secret,
    deals verifiable shares, and delivers each over a quote-verified
    channel (``share_tamper``, a test hook, can corrupt a share in
    transit to model a compromised channel). Every reachable node
    verifies its share against the broadcast commitments, exchanges
    shares with its peers, recovers the secret from any ``t`` of them,
    checks it against the base commitment, and seals it.
    """
    n = len(enclaves)
    if n < 1:
        raise BootstrapError("at least one relay enclave required")
    names = node_names if node_names is not None else [f"node{i}" for i in range(n)]
    up = reachable if reachable is not None else [True] * n
    if not up[0]:
        raise BootstrapError("dealer node unreachable", offender=names[0])

    dealer = enclaves[0]
    # nonzero: the secret doubles as the phase-2 ECDH scalar
    secret = 1 + rng.getrandbits(256) % (field_params.q - 1)
    deal = vss_deal(field_params, n, secret, rng)

    # quote-verified share delivery (paper's attested channels)
    delivered: dict[int, Share] = {}
    for i, enclave in enumerate(enclaves):
        if not up[i]:
            continue
        challenge = bind_report_data(b"bootstrap:" + names[i].encode())
        quote = enclave.produce_quote(challenge)
        if not verify_quote(quote, dealer.measurement, challenge, authority_public_key):
            raise BootstrapError(f"attestation of {names[i]} failed", offender=names[i])
        share = deal.shares[i]
        if share_tamper is not None:
            share = share_tamper(i, share) or share
        delivered[i] = share

    # every node verifies its own share against the public commitments
    for i, share in delivered.items():
        if not vss_verify_share(field_params, share, deal.commitments):
            raise BootstrapError(
                f"share for {names[i]} fails commitment verification", offender=names[0]
            )

    t = deal.t
    if len(delivered) < t:
        raise BootstrapError(
            f"only {len(delivered)} of {n} nodes reachable, threshold is {t}"
        )

    # all-to-all exchange among reachable nodes, then local recovery
    pool = list(delivered.values())
    for i, enclave in enumerate(enclaves):
        if not up[i]:
            continue
        recovered = vss_recover(field_params, pool[:t], t)
        if not vss_check_secret(field_params, recovered, deal.commitments):
            raise BootstrapError(f"recovered secret fails E0 check at {names[i]}")
        enclave._install_relay_secret(recovered, field_params)
    return deal.commitments
