"""Hybrid post-quantum end-to-end encrypted messaging.

ML-KEM-768 encapsulation per message, SHA-256/HKDF session-key derivation,
AES-256-GCM envelopes, a zero-trust relay that only forwards opaque bytes,
and a TOFU-pinning client agent with terminal and web-console frontends.

Submodules load lazily so that importing pqe.relay (or pqe itself) never
pulls in the cryptographic modules: the relay's blindness is structural,
and a test audits sys.modules to keep it that way.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    # kem
    "KemCiphertext": "kem",
    "KemPublicKey": "kem",
    "KemSecretKey": "kem",
    "SharedSecret": "kem",
    "active_backend": "kem",
    "kem_decapsulate": "kem",
    "kem_encapsulate": "kem",
    "kem_generate_keypair": "kem",
    # symmetric
    "AeadSealed": "symmetric",
    "DerivationMode": "symmetric",
    "SessionKey": "symmetric",
    "aead_open": "symmetric",
    "aead_seal": "symmetric",
    "derive_session_key": "symmetric",
    # envelope
    "Envelope": "envelope",
    "ReplayWindow": "envelope",
    "SealSession": "envelope",
    "VERSION_V1": "envelope",
    "VERSION_V2": "envelope",
    "decode_envelope": "envelope",
    "encode_envelope": "envelope",
    "hybrid_open": "envelope",
    "hybrid_seal": "envelope",
    # errors
    "AuthFailure": "errors",
    "FingerprintMismatch": "errors",
    "KemError": "errors",
    "KeyStoreError": "errors",
    "MalformedEnvelope": "errors",
    "OpenFailure": "errors",
    "PqeError": "errors",
    "RelayProtocolError": "errors",
    "ReplayFailure": "errors",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name: str):
    module_name = _EXPORTS.get(name)
    if module_name is None:
        raise AttributeError(f"module 'pqe' has no attribute {name!r}")
    module = importlib.import_module(f".{module_name}", __name__)
    value = getattr(module, name)
    globals()[name] = value
    return value


def __dir__():
    return __all__
