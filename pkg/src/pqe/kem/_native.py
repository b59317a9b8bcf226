"""OpenSSL-backed ML-KEM-768 via the `cryptography` package.

This is the compiled fast path. It only understands 64-byte seeds on the
private side (OpenSSL serializes ML-KEM private keys as seeds), so callers
that hold a bare 2400-byte decapsulation key fall back to the pure backend.
"""

from cryptography.exceptions import UnsupportedAlgorithm

try:
    from cryptography.hazmat.backends.openssl.backend import backend as _ossl
    from cryptography.hazmat.primitives.asymmetric import mlkem as _mlkem

    _SUPPORTED = _ossl.mlkem_supported()
except (ImportError, AttributeError):  # pragma: no cover - ancient cryptography
    _SUPPORTED = False


def available() -> bool:
    return _SUPPORTED


def keygen_from_seed(seed: bytes) -> bytes:
    """Expand a (d || z) seed and return the 1184-byte encapsulation key."""
    key = _mlkem.MLKEM768PrivateKey.from_seed_bytes(seed)
    return key.public_key().public_bytes_raw()


def encaps(ek: bytes) -> tuple[bytes, bytes]:
    """Randomized encapsulation. Returns (ciphertext, shared_secret).

    Raises ValueError if the encapsulation key fails OpenSSL's input checks.
    """
    try:
        pub = _mlkem.MLKEM768PublicKey.from_public_bytes(ek)
    except UnsupportedAlgorithm:  # pragma: no cover
        raise
    ss, ct = pub.encapsulate()
    return ct, ss


def decaps_with_seed(seed: bytes, ct: bytes) -> bytes:
    key = _mlkem.MLKEM768PrivateKey.from_seed_bytes(seed)
    return key.decapsulate(ct)
