"""Hybrid seal/open pipeline and the binary envelope wire format.

One envelope is one message: a fresh ML-KEM encapsulation, the AES-256-GCM
ciphertext under the derived session key, and an authenticated header. The
header bytes (magic through seq) are the AEAD associated data, so any header
mutation -- or any flip anywhere else in the encoding -- surfaces as an
authentication failure, never as wrong plaintext.

Wire layout (big-endian multi-byte integers)::

    "PQE1" | version | slen | sender | rlen | recipient | seq(8)
           | kem_ct(1088) | nonce(12) | ct_len(4) | ciphertext | tag(16)

The encoding is canonical: one envelope, one byte string. Decoding rejects
truncation, trailing bytes, bad magic, unknown versions, oversize names and
oversize payloads as MalformedEnvelope before any cryptography runs.

Replay defense is a per-direction 64-slot sliding bitmask over seq, checked
before decapsulation and advanced only after a successful open.
"""

import os
import struct
from dataclasses import dataclass

from .errors import MalformedEnvelope, PqeError, ReplayFailure
from .kem import (
    CT_LEN,
    KemCiphertext,
    KemPublicKey,
    KemSecretKey,
    Rng,
    kem_decapsulate,
    kem_encapsulate,
)
from .symmetric import (
    NONCE_LEN,
    TAG_LEN,
    AeadSealed,
    DerivationMode,
    aead_open,
    aead_seal,
    derive_session_key,
)

MAGIC = b"PQE1"
VERSION_V1 = 0x01  # raw-hash key derivation
VERSION_V2 = 0x02  # context-bound key derivation (default)
_VERSIONS = (VERSION_V1, VERSION_V2)

MAX_NAME = 64
MAX_PLAINTEXT = 1 << 20  # 1 MiB
WINDOW_SIZE = 64

# fixed per-envelope overhead on top of |plaintext| + |sender| + |recipient|
OVERHEAD_BASE = len(MAGIC) + 1 + 1 + 1 + 8 + CT_LEN + NONCE_LEN + 4 + TAG_LEN


def encoded_overhead(sender: str, recipient: str) -> int:
    """Exact encoded size minus plaintext size for the given names."""
    return OVERHEAD_BASE + len(sender.encode()) + len(recipient.encode())


@dataclass(frozen=True)
class Envelope:
    version: int
    sender: str
    recipient: str
    seq: int
    kem_ct: KemCiphertext
    nonce: bytes
    ciphertext: bytes
    tag: bytes

    def __post_init__(self):
        # construction-time rigidity: only well-typed, well-sized envelopes
        # exist, so no secret-bearing object can ever ride in a field
        if not isinstance(self.kem_ct, KemCiphertext):
            raise PqeError("kem_ct must be a KemCiphertext")
        if not isinstance(self.nonce, bytes) or len(self.nonce) != NONCE_LEN:
            raise PqeError(f"nonce must be {NONCE_LEN} bytes")
        if not isinstance(self.tag, bytes) or len(self.tag) != TAG_LEN:
            raise PqeError(f"tag must be {TAG_LEN} bytes")
        if not isinstance(self.ciphertext, bytes):
            raise PqeError("ciphertext must be bytes")


@dataclass
class ReplayWindow:
    """Sliding acceptance window over one sender->recipient direction.

    ``highest`` is the largest seq successfully opened; ``mask`` bit i marks
    seq ``highest - i`` as seen. Out-of-order delivery within 64 of the
    newest message is accepted exactly once; anything older, or any repeat,
    is rejected.
    """

    highest: int = 0
    mask: int = 0

    def would_accept(self, seq: int) -> bool:
        if seq <= 0 or seq >= 1 << 64:
            return False
        if seq > self.highest:
            return True
        offset = self.highest - seq
        if offset >= WINDOW_SIZE:
            return False
        return not (self.mask >> offset) & 1

    def record(self, seq: int) -> None:
        if seq > self.highest:
            shift = seq - self.highest
            self.mask = ((self.mask << shift) | 1) & ((1 << WINDOW_SIZE) - 1)
            self.highest = seq
        else:
            self.mask |= 1 << (self.highest - seq)


def _name_bytes(name: str, role: str) -> bytes:
    try:
        raw = name.encode("utf-8")
    except UnicodeEncodeError:
        raise PqeError(f"{role} name is not encodable as UTF-8")
    if not 1 <= len(raw) <= MAX_NAME:
        raise PqeError(f"{role} name must be 1..{MAX_NAME} UTF-8 bytes")
    return raw


def _kdf_context(version: int, sender: str, recipient: str) -> bytes:
    return b"pqe/v2/" + sender.encode() + "→".encode() + recipient.encode() + bytes([version])


def _mode_for(version: int) -> DerivationMode:
    return DerivationMode.V1_RAW_HASH if version == VERSION_V1 else DerivationMode.V2_CONTEXT_BOUND


def encode_header(version: int, sender: str, recipient: str, seq: int) -> bytes:
    """The authenticated prefix: magic through seq. Doubles as the AAD."""
    if version not in _VERSIONS:
        raise PqeError(f"unknown envelope version {version:#x}")
    if not 0 <= seq < 1 << 64:
        raise PqeError("seq must fit an unsigned 64-bit integer")
    s = _name_bytes(sender, "sender")
    r = _name_bytes(recipient, "recipient")
    return (
        MAGIC
        + bytes([version, len(s)])
        + s
        + bytes([len(r)])
        + r
        + struct.pack(">Q", seq)
    )


def encode_envelope(env: Envelope) -> bytes:
    if len(env.ciphertext) > MAX_PLAINTEXT:
        raise PqeError("ciphertext exceeds the 1 MiB envelope cap")
    header = encode_header(env.version, env.sender, env.recipient, env.seq)
    return (
        header
        + env.kem_ct.bytes
        + env.nonce
        + struct.pack(">I", len(env.ciphertext))
        + env.ciphertext
        + env.tag
    )


def decode_envelope(data: bytes) -> Envelope:
    """Strict, canonical decode. Raises MalformedEnvelope on any framing
    violation; performs no cryptographic work."""

    def need(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise MalformedEnvelope(f"truncated at {what}")
        out = data[pos: pos + n]
        pos += n
        return out

    pos = 0
    if need(4, "magic") != MAGIC:
        raise MalformedEnvelope("bad magic")
    version = need(1, "version")[0]
    if version not in _VERSIONS:
        raise MalformedEnvelope(f"unknown version {version:#x}")
    names = []
    for role in ("sender", "recipient"):
        n = need(1, f"{role} length")[0]
        if not 1 <= n <= MAX_NAME:
            raise MalformedEnvelope(f"{role} length {n} out of range")
        try:
            names.append(need(n, role).decode("utf-8"))
        except UnicodeDecodeError:
            raise MalformedEnvelope(f"{role} is not valid UTF-8")
    seq = struct.unpack(">Q", need(8, "seq"))[0]
    kem_ct = need(CT_LEN, "kem ciphertext")
    nonce = need(NONCE_LEN, "nonce")
    ct_len = struct.unpack(">I", need(4, "ciphertext length"))[0]
    if ct_len > MAX_PLAINTEXT:
        raise MalformedEnvelope(f"ciphertext length {ct_len} exceeds cap")
    ciphertext = need(ct_len, "ciphertext")
    tag = need(TAG_LEN, "tag")
    if pos != len(data):
        raise MalformedEnvelope(f"{len(data) - pos} trailing bytes")
    return Envelope(
        version=version,
        sender=names[0],
        recipient=names[1],
        seq=seq,
        kem_ct=KemCiphertext(kem_ct),
        nonce=nonce,
        ciphertext=ciphertext,
        tag=tag,
    )


def hybrid_seal(
    recipient_pk: KemPublicKey,
    sender: str,
    recipient: str,
    seq: int,
    plaintext: bytes,
    version: int = VERSION_V2,
    rng: Rng | None = None,
) -> Envelope:
    """Seal one message: fresh encapsulation, derive, AEAD, destroy secret.

    Every call performs its own KEM encapsulation, so each message gets an
    unrelated session key (per-message forward-secrecy granularity). Use
    SealSession to amortize the KEM cost across messages instead.
    """
    if len(plaintext) > MAX_PLAINTEXT:
        raise PqeError("plaintext exceeds the 1 MiB envelope cap")
    aad = encode_header(version, sender, recipient, seq)
    kem_ct, ss = kem_encapsulate(recipient_pk, rng)
    try:
        key = derive_session_key(ss, _mode_for(version), _kdf_context(version, sender, recipient))
    finally:
        ss.destroy()
    nonce = (rng or os.urandom)(NONCE_LEN)
    sealed = aead_seal(key, nonce, plaintext, aad)
    return Envelope(
        version=version,
        sender=sender,
        recipient=recipient,
        seq=seq,
        kem_ct=kem_ct,
        nonce=sealed.nonce,
        ciphertext=sealed.ciphertext,
        tag=sealed.tag,
    )


def hybrid_open(
    recipient_sk: KemSecretKey,
    env: Envelope,
    window: ReplayWindow | None = None,
) -> bytes:
    """Open one envelope, enforcing replay, decapsulation, and AEAD checks.

    Raises ReplayFailure before any cryptography if seq was seen or is older
    than the window; AuthFailure if anything was tampered with (including
    the KEM ciphertext, via implicit rejection). The window advances only
    on success.
    """
    if window is not None and not window.would_accept(env.seq):
        raise ReplayFailure(f"seq {env.seq} already seen or too old")
    ss = kem_decapsulate(recipient_sk, env.kem_ct)
    try:
        key = derive_session_key(
            ss, _mode_for(env.version), _kdf_context(env.version, env.sender, env.recipient)
        )
    finally:
        ss.destroy()
    aad = encode_header(env.version, env.sender, env.recipient, env.seq)
    plaintext = aead_open(key, AeadSealed(env.nonce, env.ciphertext, env.tag), aad)
    if window is not None:
        window.record(env.seq)
    return plaintext


class SealSession:
    """Sender-side session that reuses one encapsulation for up to
    ``rekey_every`` messages (the cost-amortization knob).

    The receiver stays stateless: every envelope still carries the KEM
    ciphertext. Nonces are drawn fresh per message, so key reuse never
    implies nonce reuse. rekey_every=1 degenerates to hybrid_seal.
    """

    MAX_REUSE = 1 << 20

    def __init__(
        self,
        recipient_pk: KemPublicKey,
        sender: str,
        recipient: str,
        rekey_every: int = 1,
        version: int = VERSION_V2,
        rng: Rng | None = None,
    ):
        if not 1 <= rekey_every <= self.MAX_REUSE:
            raise PqeError(f"rekey_every must be 1..{self.MAX_REUSE}")
        self._pk = recipient_pk
        self._sender = sender
        self._recipient = recipient
        self._rekey_every = rekey_every
        self._version = version
        self._rng = rng
        self._kem_ct: KemCiphertext | None = None
        self._key = None
        self._used = 0

    def seal(self, seq: int, plaintext: bytes) -> Envelope:
        if len(plaintext) > MAX_PLAINTEXT:
            raise PqeError("plaintext exceeds the 1 MiB envelope cap")
        if self._kem_ct is None or self._used >= self._rekey_every:
            kem_ct, ss = kem_encapsulate(self._pk, self._rng)
            try:
                self._key = derive_session_key(
                    ss,
                    _mode_for(self._version),
                    _kdf_context(self._version, self._sender, self._recipient),
                )
            finally:
                ss.destroy()
            self._kem_ct = kem_ct
            self._used = 0
        aad = encode_header(self._version, self._sender, self._recipient, seq)
        nonce = (self._rng or os.urandom)(NONCE_LEN)
        sealed = aead_seal(self._key, nonce, plaintext, aad)
        self._used += 1
        return Envelope(
            version=self._version,
            sender=self._sender,
            recipient=self._recipient,
            seq=seq,
            kem_ct=self._kem_ct,
            nonce=sealed.nonce,
            ciphertext=sealed.ciphertext,
            tag=sealed.tag,
        )
