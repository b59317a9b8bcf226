"""ML-KEM-768 key encapsulation with strict size-validated types.

Two interchangeable backends sit behind one interface:

* ``native`` -- OpenSSL (compiled, via `cryptography`). Default whenever the
  linked OpenSSL implements ML-KEM.
* ``pure``   -- pure-Python FIPS 203 implementation. Fallback, and the only
  path for deterministic (seeded) operation and for decapsulating keys
  reconstructed from bare 2400-byte decapsulation keys.

Selection happens at import time; ``PQE_KEM_BACKEND=native|pure`` overrides.
The two are cross-validated byte-for-byte in the test suite.

Sizes (FIPS 203, ML-KEM-768): public key 1184, secret key 2400,
ciphertext 1088, shared secret 32 bytes.

Implicit rejection contract: decapsulating a damaged or forged ciphertext
does NOT raise. It returns a 32-byte pseudorandom secret unrelated to the
sender's, so tampering surfaces later as an AEAD authentication failure,
never here.
"""

import hmac
import os
from collections.abc import Callable
from dataclasses import dataclass

from ..errors import KemError
from . import _native, _pure

PK_LEN = 1184
SK_LEN = 2400
CT_LEN = 1088
SS_LEN = 32
SEED_LEN = 64

Rng = Callable[[int], bytes]

_BACKEND = os.environ.get("PQE_KEM_BACKEND", "").strip().lower()
if _BACKEND not in ("native", "pure"):
    _BACKEND = "native" if _native.available() else "pure"
if _BACKEND == "native" and not _native.available():
    raise KemError("PQE_KEM_BACKEND=native but OpenSSL lacks ML-KEM support")


def active_backend() -> str:
    """Name of the backend selected at import: 'native' or 'pure'."""
    return _BACKEND


def _draw(rng: Rng | None, n: int) -> bytes:
    source = rng if rng is not None else os.urandom
    try:
        out = source(n)
    except Exception as exc:
        raise KemError(f"entropy source failed: {exc}") from exc
    if not isinstance(out, (bytes, bytearray)) or len(out) != n:
        raise KemError(f"entropy source returned {len(out) if out else 0} bytes, needed {n}")
    return bytes(out)


@dataclass(frozen=True)
class KemPublicKey:
    """ML-KEM-768 encapsulation key, exactly 1184 bytes."""

    bytes: bytes

    def __post_init__(self):
        if not isinstance(self.bytes, bytes) or len(self.bytes) != PK_LEN:
            raise KemError(f"public key must be exactly {PK_LEN} bytes")

    def fingerprint(self) -> str:
        """Lowercase hex SHA-256 of the key bytes (64 hex chars)."""
        import hashlib

        return hashlib.sha256(self.bytes).hexdigest()


@dataclass(frozen=True)
class KemCiphertext:
    """ML-KEM-768 encapsulation ciphertext, exactly 1088 bytes."""

    bytes: bytes

    def __post_init__(self):
        if not isinstance(self.bytes, bytes) or len(self.bytes) != CT_LEN:
            raise KemError(f"KEM ciphertext must be exactly {CT_LEN} bytes")


class KemSecretKey:
    """ML-KEM-768 decapsulation key, exactly 2400 bytes.

    Keys generated in-process additionally retain their 64-byte seed, which
    lets the native backend decapsulate; the seed never serializes. Keys
    rebuilt from bare bytes (e.g. loaded from disk) have no seed and
    decapsulate through the pure backend.
    """

    __slots__ = ("_dk", "_seed")

    def __init__(self, data: bytes):
        if not isinstance(data, bytes) or len(data) != SK_LEN:
            raise KemError(f"secret key must be exactly {SK_LEN} bytes")
        self._dk: bytes | None = data
        self._seed: bytes | None = None

    @classmethod
    def _from_seed(cls, seed: bytes) -> "KemSecretKey":
        self = object.__new__(cls)
        self._dk = None  # expanded on first .bytes access
        self._seed = seed
        return self

    @property
    def bytes(self) -> bytes:
        if self._dk is None:
            _, self._dk = _pure.keygen(self._seed)
        return self._dk

    def __eq__(self, other) -> bool:
        if not isinstance(other, KemSecretKey):
            return NotImplemented
        return hmac.compare_digest(self.bytes, other.bytes)

    __hash__ = None  # secret material is not dict-key material

    def __repr__(self) -> str:  # never leak key bytes through logs
        return f"KemSecretKey(<{SK_LEN} bytes redacted>)"


class SharedSecret:
    """32-byte KEM shared secret, zeroized on release.

    CPython cannot guarantee that no copy survives, but the canonical buffer
    is mutable and ``destroy()`` overwrites it; ``hybrid_seal``/``hybrid_open``
    call it as soon as the session key is derived.
    """

    __slots__ = ("_buf", "_destroyed")

    def __init__(self, data: bytes):
        if len(data) != SS_LEN:
            raise KemError(f"shared secret must be exactly {SS_LEN} bytes")
        self._buf = bytearray(data)
        self._destroyed = False

    def __bytes__(self) -> bytes:
        if self._destroyed:
            raise KemError("shared secret already destroyed")
        return bytes(self._buf)

    def destroy(self) -> None:
        for i in range(len(self._buf)):
            self._buf[i] = 0
        self._destroyed = True

    def __eq__(self, other) -> bool:
        if isinstance(other, SharedSecret):
            return hmac.compare_digest(bytes(self._buf), bytes(other._buf))
        return NotImplemented

    __hash__ = None

    def __repr__(self) -> str:
        return "SharedSecret(<32 bytes redacted>)"


def kem_generate_keypair(rng: Rng | None = None) -> tuple[KemPublicKey, KemSecretKey]:
    """Draw a 64-byte seed from the entropy source and expand a keypair.

    Deterministic under a deterministic ``rng``; both backends expand the
    same seed to the same keypair.
    """
    seed = _draw(rng, SEED_LEN)
    if _BACKEND == "native":
        ek = _native.keygen_from_seed(seed)
    else:
        ek, dk = _pure.keygen(seed)
    sk = KemSecretKey._from_seed(seed)
    if _BACKEND == "pure":
        sk._dk = dk
    return KemPublicKey(ek), sk


def kem_encapsulate(
    pk: KemPublicKey, rng: Rng | None = None
) -> tuple[KemCiphertext, SharedSecret]:
    """Encapsulate a fresh shared secret to ``pk``.

    With the default entropy source the native backend (when active) uses its
    own DRBG. Passing an explicit ``rng`` forces the pure backend so the
    caller's 32 bytes are used verbatim (this is what known-answer tests do).
    """
    if _BACKEND == "native" and rng is None:
        try:
            ct, ss = _native.encaps(pk.bytes)
        except ValueError as exc:
            raise KemError(f"malformed public key: {exc}") from exc
    else:
        m = _draw(rng, 32)
        try:
            ct, ss = _pure.encaps(pk.bytes, m)
        except ValueError as exc:
            raise KemError(f"malformed public key: {exc}") from exc
    return KemCiphertext(ct), SharedSecret(ss)


def kem_decapsulate(sk: KemSecretKey, ct: KemCiphertext) -> SharedSecret:
    """Recover the shared secret. Never raises on a damaged ciphertext:
    implicit rejection returns an unrelated pseudorandom secret instead
    (authentication failure then surfaces at the AEAD layer)."""
    if _BACKEND == "native" and sk._seed is not None:
        ss = _native.decaps_with_seed(sk._seed, ct.bytes)
    else:
        ss = _pure.decaps(sk.bytes, ct.bytes)
    return SharedSecret(ss)
