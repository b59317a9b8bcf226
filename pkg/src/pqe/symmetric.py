"""Session-key derivation and AES-256-GCM authenticated encryption.

A 32-byte KEM shared secret becomes a 32-byte AES session key in one of two
modes, selected by the envelope version byte:

* V1_RAW_HASH      -- SHA-256(secret). The original construction.
* V2_CONTEXT_BOUND -- HMAC-SHA-256 extract-then-expand (RFC 5869 with a
  zero salt, L = 32) over the secret, with a caller-supplied context as the
  info input. Default: binding direction and protocol version into the key
  buys domain separation that a raw hash cannot.

Both are deterministic; stateless; safe for concurrent use. The
no-nonce-reuse contract binds callers, but the envelope layer derives a
fresh key per message, so a repeated nonce under one key cannot occur there.
"""

import hashlib
import hmac
from dataclasses import dataclass
from enum import Enum

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import AuthFailure, PqeError
from .kem import SharedSecret

KEY_LEN = 32
NONCE_LEN = 12
TAG_LEN = 16
MAX_CONTEXT = 255


class DerivationMode(Enum):
    V1_RAW_HASH = 1
    V2_CONTEXT_BOUND = 2


@dataclass(frozen=True)
class SessionKey:
    """32-byte AES-256 key plus the mode that derived it."""

    bytes: bytes
    mode: DerivationMode

    def __post_init__(self):
        if len(self.bytes) != KEY_LEN:
            raise PqeError(f"session key must be {KEY_LEN} bytes")

    def __repr__(self) -> str:
        return f"SessionKey(<32 bytes redacted>, {self.mode.name})"


@dataclass(frozen=True)
class AeadSealed:
    """GCM output triple. Ciphertext length always equals plaintext length."""

    nonce: bytes
    ciphertext: bytes
    tag: bytes

    def __post_init__(self):
        if len(self.nonce) != NONCE_LEN:
            raise PqeError(f"nonce must be {NONCE_LEN} bytes")
        if len(self.tag) != TAG_LEN:
            raise PqeError(f"tag must be {TAG_LEN} bytes")


def hkdf_sha256(ikm: bytes, salt: bytes, info: bytes, length: int = 32) -> bytes:
    """RFC 5869 extract-then-expand. Exposed for the v2 derivation and tests."""
    if not salt:
        salt = bytes(hashlib.sha256().digest_size)
    prk = hmac.new(salt, ikm, hashlib.sha256).digest()
    okm = b""
    block = b""
    counter = 1
    while len(okm) < length:
        block = hmac.new(prk, block + info + bytes([counter]), hashlib.sha256).digest()
        okm += block
        counter += 1
    return okm[:length]


def derive_session_key(
    ss: SharedSecret | bytes,
    mode: DerivationMode = DerivationMode.V2_CONTEXT_BOUND,
    context: bytes = b"",
) -> SessionKey:
    """Derive the AES-256 session key from a KEM shared secret.

    V1 ignores the context entirely; V2 mixes it in as the HKDF info so that
    the same secret yields unrelated keys under different contexts.
    """
    raw = bytes(ss) if isinstance(ss, SharedSecret) else ss
    if len(raw) != 32:
        raise PqeError("shared secret must be 32 bytes")
    if len(context) > MAX_CONTEXT:
        raise PqeError(f"context must be at most {MAX_CONTEXT} bytes")
    if mode is DerivationMode.V1_RAW_HASH:
        key = hashlib.sha256(raw).digest()
    else:
        key = hkdf_sha256(raw, salt=b"", info=context, length=KEY_LEN)
    return SessionKey(key, mode)


def aead_seal(key: SessionKey, nonce: bytes, plaintext: bytes, aad: bytes) -> AeadSealed:
    """AES-256-GCM seal. Total: never fails for well-formed inputs.

    Caller must not reuse a nonce under the same key.
    """
    if len(nonce) != NONCE_LEN:
        raise PqeError(f"nonce must be {NONCE_LEN} bytes")
    blob = AESGCM(key.bytes).encrypt(nonce, plaintext, aad)
    return AeadSealed(nonce, blob[:-TAG_LEN], blob[-TAG_LEN:])


def aead_open(key: SessionKey, sealed: AeadSealed, aad: bytes) -> bytes:
    """AES-256-GCM open. Returns the plaintext only if key, nonce,
    ciphertext, tag, and aad all match the sealing call.

    Raises AuthFailure otherwise -- one variant for every cause, and no
    partial plaintext is ever released.
    """
    try:
        return AESGCM(key.bytes).decrypt(
            sealed.nonce, sealed.ciphertext + sealed.tag, aad
        )
    except InvalidTag:
        raise AuthFailure("AEAD authentication failed") from None
