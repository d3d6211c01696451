"""Authenticated encryption for payload envelopes.

ChaCha20-Poly1305 with 96-bit nonces. Nonces are counters scoped per
(key, direction) and travel explicitly in the wire envelope, so they
are never reused and replays are visible.
"""

from __future__ import annotations

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from crossrelay.crypto.ecdh import CommunicationKey

NONCE_SIZE = 12
TAG_SIZE = 16


class AuthenticationError(Exception):
    """Decryption failed: the ciphertext or associated data was modified."""


def _key_bytes(key: CommunicationKey | bytes) -> bytes:
    return key.key if isinstance(key, CommunicationKey) else key


def aead_encrypt(
    key: CommunicationKey | bytes, nonce: bytes, plaintext: bytes, associated_data: bytes
) -> bytes:
    """Encrypt; returns ciphertext with the 16-byte tag appended."""
    if len(nonce) != NONCE_SIZE:
        raise ValueError(f"nonce must be {NONCE_SIZE} bytes")
    return ChaCha20Poly1305(_key_bytes(key)).encrypt(nonce, plaintext, associated_data)


def aead_decrypt(
    key: CommunicationKey | bytes, nonce: bytes, ciphertext: bytes, associated_data: bytes
) -> bytes:
    """Decrypt and authenticate; raises AuthenticationError on tampering."""
    if len(nonce) != NONCE_SIZE:
        raise ValueError(f"nonce must be {NONCE_SIZE} bytes")
    try:
        return ChaCha20Poly1305(_key_bytes(key)).decrypt(nonce, ciphertext, associated_data)
    except InvalidTag as exc:
        raise AuthenticationError("AEAD authentication failed") from exc


class NonceSequence:
    """96-bit counter nonces: one direction byte, three zero bytes, u64 counter."""

    def __init__(self, direction: int, start: int = 0) -> None:
        if not 0 <= direction <= 0xFF:
            raise ValueError("direction must fit in one byte")
        self._prefix = bytes([direction, 0, 0, 0])
        self._counter = start

    @property
    def counter(self) -> int:
        return self._counter

    def next(self) -> bytes:
        if self._counter >= 1 << 64:
            raise OverflowError("nonce counter exhausted")
        nonce = self._prefix + self._counter.to_bytes(8, "big")
        self._counter += 1
        return nonce
