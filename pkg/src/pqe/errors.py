"""Exception hierarchy shared across the package.

Open-path failures deliberately carry no cause detail beyond their class:
an attacker observing error behaviour must not learn whether a KEM
ciphertext, an AEAD tag, or a header was the part that failed.
"""


class PqeError(Exception):
    """Base class for every error raised by this package."""


class KemError(PqeError):
    """Malformed KEM key material or entropy-source failure."""


class OpenFailure(PqeError):
    """An envelope could not be opened. See subclasses for the class of
    failure; within a class, causes are indistinguishable by design."""


class AuthFailure(OpenFailure):
    """AEAD authentication failed: tampering, wrong key, or a forged or
    damaged KEM ciphertext (implicit rejection surfaces here)."""


class ReplayFailure(OpenFailure):
    """Sequence number already seen or older than the replay window."""


class MalformedEnvelope(OpenFailure):
    """Envelope bytes violate the wire format (framing, magic, lengths)."""


class KeyStoreError(PqeError):
    """On-disk key material is missing, corrupt, or unwritable."""


class FingerprintMismatch(PqeError):
    """A fetched peer key does not match the pinned fingerprint."""

    def __init__(self, peer: str, pinned: str, fetched: str):
        super().__init__(
            f"key for {peer!r} changed: pinned {pinned}, relay now serves {fetched}"
        )
        self.peer = peer
        self.pinned = pinned
        self.fetched = fetched


class RelayProtocolError(PqeError):
    """The relay answered a client request with an ERROR frame."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}{': ' + detail if detail else ''}")
        self.code = code
