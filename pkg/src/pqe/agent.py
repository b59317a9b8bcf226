"""Client endpoint: key lifecycle, peer pinning, and relay messaging.

All plaintext lives here and in the attached displays (terminal or web
console); everything that leaves this module toward the relay is a sealed
envelope inside an opaque frame payload.

Key material sits on disk in a PEM-like armor::

    -----BEGIN PQE KYBER768 PUBLIC KEY-----
    <base64 of the raw 1184 bytes>
    -----END PQE KYBER768 PUBLIC KEY-----

(private keys analogously, 2400 bytes, file mode 0600 where supported).
Peer identity is trust-on-first-use: the first fetched key is pinned by
SHA-256 fingerprint; any later fetch that disagrees blocks sending until
an explicit re-pin.
"""

import asyncio
import base64
import binascii
import json
import logging
import os
import random
import secrets
import time
from dataclasses import dataclass
from pathlib import Path

from .envelope import (
    ReplayWindow,
    SealSession,
    VERSION_V2,
    decode_envelope,
    encode_envelope,
    hybrid_open,
)
from .errors import (
    AuthFailure,
    FingerprintMismatch,
    KeyStoreError,
    MalformedEnvelope,
    OpenFailure,
    PqeError,
    RelayProtocolError,
    ReplayFailure,
)
from .frames import Frame, FrameError, FrameType, MAX_LINE, decode_frame, encode_frame, frame_with_payload
from .kem import PK_LEN, SK_LEN, KemPublicKey, KemSecretKey, kem_generate_keypair

log = logging.getLogger("pqe.agent")

_PUB_LABEL = "PQE KYBER768 PUBLIC KEY"
_PRIV_LABEL = "PQE KYBER768 PRIVATE KEY"

RECONNECT_BASE = 0.5
RECONNECT_CAP = 15.0


def format_fingerprint(fingerprint: str) -> str:
    """First 16 hex chars, grouped in 4s: 'ab12 cd34 ef56 0789'."""
    head = fingerprint[:16]
    return " ".join(head[i: i + 4] for i in range(0, 16, 4))


def format_incoming(sender: str, text: str) -> str:
    return f"[{sender}] {text}"


# ---------------------------------------------------------------------------
# PEM-like armor
# ---------------------------------------------------------------------------

def armor(label: str, raw: bytes) -> str:
    b64 = base64.b64encode(raw).decode("ascii")
    lines = [b64[i: i + 64] for i in range(0, len(b64), 64)]
    return f"-----BEGIN {label}-----\n" + "\n".join(lines) + f"\n-----END {label}-----\n"


def dearmor(label: str, text: str, expect_len: int) -> bytes:
    head, tail = f"-----BEGIN {label}-----", f"-----END {label}-----"
    lines = [ln.strip() for ln in text.strip().splitlines()]
    if len(lines) < 3 or lines[0] != head or lines[-1] != tail:
        raise KeyStoreError(f"missing {label} armor")
    try:
        raw = base64.b64decode("".join(lines[1:-1]), validate=True)
    except (binascii.Error, ValueError) as exc:
        raise KeyStoreError(f"bad base64 inside {label} armor: {exc}") from None
    if len(raw) != expect_len:
        raise KeyStoreError(f"{label} decodes to {len(raw)} bytes, expected {expect_len}")
    return raw


def load_public_key_file(path: str | Path) -> KemPublicKey:
    """Read an armored public key file (the --pin-file override)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise KeyStoreError(f"cannot read {path}: {exc}") from None
    return KemPublicKey(dearmor(_PUB_LABEL, text, PK_LEN))


# ---------------------------------------------------------------------------
# KeyStore
# ---------------------------------------------------------------------------

@dataclass
class KeyStore:
    name: str
    directory: Path
    public_key: KemPublicKey
    secret_key: KemSecretKey

    @property
    def fingerprint(self) -> str:
        return self.public_key.fingerprint()


def init_identity(name: str, key_dir: str | Path) -> KeyStore:
    """Load or create the named identity in key_dir. Idempotent: existing
    keys are loaded, and a half-present or corrupt pair refuses to start
    rather than silently regenerating."""
    directory = Path(key_dir)
    directory.mkdir(parents=True, exist_ok=True)
    try:
        os.chmod(directory, 0o700)
    except OSError:
        pass
    pub_path = directory / f"{name}_pub.pem"
    priv_path = directory / f"{name}_priv.pem"
    have_pub, have_priv = pub_path.exists(), priv_path.exists()
    if have_pub != have_priv:
        missing = priv_path if have_pub else pub_path
        raise KeyStoreError(
            f"identity half-present: {missing} is missing; refusing to regenerate"
        )
    if have_pub:
        try:
            pub_text = pub_path.read_text()
            priv_text = priv_path.read_text()
        except OSError as exc:
            raise KeyStoreError(f"cannot read key files: {exc}") from None
        try:
            pk = KemPublicKey(dearmor(_PUB_LABEL, pub_text, PK_LEN))
        except KeyStoreError as exc:
            raise KeyStoreError(f"{pub_path}: {exc}") from None
        try:
            sk = KemSecretKey(dearmor(_PRIV_LABEL, priv_text, SK_LEN))
        except KeyStoreError as exc:
            raise KeyStoreError(f"{priv_path}: {exc}") from None
        return KeyStore(name, directory, pk, sk)
    pk, sk = kem_generate_keypair()
    pub_path.write_text(armor(_PUB_LABEL, pk.bytes))
    priv_path.write_text(armor(_PRIV_LABEL, sk.bytes))
    try:
        os.chmod(priv_path, 0o600)
    except OSError:
        pass
    return KeyStore(name, directory, pk, sk)


# ---------------------------------------------------------------------------
# Peer pins (TOFU)
# ---------------------------------------------------------------------------

@dataclass
class PeerRecord:
    name: str
    public_key: KemPublicKey
    fingerprint: str
    first_seen: float
    pinned: bool = True

    def display(self) -> dict:
        """Console-safe view: fingerprints only, never key bytes."""
        return {
            "name": self.name,
            "fingerprint": self.fingerprint,
            "fingerprint_display": format_fingerprint(self.fingerprint),
            "first_seen": self.first_seen,
            "pinned": self.pinned,
        }


class PeerRegistry:
    """Pinned peer records, persisted beside the keystore."""

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._records: dict[str, PeerRecord] = {}
        self._load()

    def _load(self) -> None:
        if not self._path.exists():
            return
        try:
            doc = json.loads(self._path.read_text())
            for entry in doc:
                pk = KemPublicKey(base64.b64decode(entry["public_key"]))
                rec = PeerRecord(
                    name=entry["name"],
                    public_key=pk,
                    fingerprint=entry["fingerprint"],
                    first_seen=entry["first_seen"],
                    pinned=entry.get("pinned", True),
                )
                if rec.fingerprint != pk.fingerprint():
                    raise ValueError(f"fingerprint mismatch in pin for {rec.name}")
                self._records[rec.name] = rec
        except (ValueError, KeyError, TypeError, json.JSONDecodeError, PqeError) as exc:
            raise KeyStoreError(f"corrupt pin file {self._path}: {exc}") from None

    def _save(self) -> None:
        doc = [
            {
                "name": r.name,
                "public_key": base64.b64encode(r.public_key.bytes).decode(),
                "fingerprint": r.fingerprint,
                "first_seen": r.first_seen,
                "pinned": r.pinned,
            }
            for r in self._records.values()
        ]
        tmp = self._path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, indent=1))
        tmp.replace(self._path)

    def get(self, name: str) -> PeerRecord | None:
        return self._records.get(name)

    def all(self) -> list[PeerRecord]:
        return sorted(self._records.values(), key=lambda r: r.name)

    def pin(self, name: str, pk: KemPublicKey) -> PeerRecord:
        rec = PeerRecord(name, pk, pk.fingerprint(), time.time())
        self._records[name] = rec
        self._save()
        return rec

    def verify_or_pin(self, name: str, pk: KemPublicKey) -> PeerRecord:
        """TOFU core: pin on first sight, reject any later change."""
        fetched = pk.fingerprint()
        rec = self._records.get(name)
        if rec is None:
            return self.pin(name, pk)
        if rec.fingerprint != fetched:
            raise FingerprintMismatch(name, rec.fingerprint, fetched)
        return rec


# ---------------------------------------------------------------------------
# Outbound sequence persistence
# ---------------------------------------------------------------------------

class SeqState:
    """Per-recipient monotonic send counters with crash-safe persistence.

    A corrupt state file is abandoned in favour of a randomized high base so
    peers' replay windows never see a reused sequence number (availability
    over continuity)."""

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._seqs: dict[str, int] = {}
        self._base = 1
        if self._path.exists():
            try:
                doc = json.loads(self._path.read_text())
                self._seqs = {str(k): int(v) for k, v in doc.items()}
                if any(v < 0 for v in self._seqs.values()):
                    raise ValueError("negative seq")
            except (ValueError, TypeError, json.JSONDecodeError):
                self._seqs = {}
                self._base = (1 << 32) + secrets.randbits(31)
                log.warning(
                    "seq state %s corrupt; restarting from randomized base %d",
                    self._path, self._base,
                )

    def next(self, peer: str) -> int:
        seq = self._seqs.get(peer, self._base - 1) + 1
        self._seqs[peer] = seq
        tmp = self._path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self._seqs))
        tmp.replace(self._path)
        return seq

    def last(self, peer: str) -> int | None:
        return self._seqs.get(peer)


# ---------------------------------------------------------------------------
# The agent
# ---------------------------------------------------------------------------

class ClientAgent:
    """Event-loop client: one relay connection, one inbox, one timeline.

    The single loop serializes DELIVER handling, sends, console calls, and
    replay-window updates, which is exactly the serialization the envelope
    module's ReplayWindow contract asks of its caller.
    """

    def __init__(
        self,
        name: str,
        relay_host: str,
        relay_port: int,
        keystore: KeyStore,
        peers: PeerRegistry,
        seqs: SeqState,
        rekey_every: int = 1,
        version: int = VERSION_V2,
    ):
        self.name = name
        self.relay_host = relay_host
        self.relay_port = relay_port
        self.keystore = keystore
        self.peers = peers
        self.seqs = seqs
        self.rekey_every = rekey_every
        self.version = version
        self.timeline: list[dict] = []
        self.online = asyncio.Event()
        self._writer: asyncio.StreamWriter | None = None
        self._run_task: asyncio.Task | None = None
        self._pending: asyncio.Future | None = None
        self._request_lock = asyncio.Lock()
        self._windows: dict[str, ReplayWindow] = {}
        self._sessions: dict[str, SealSession] = {}
        self._subscribers: list[asyncio.Queue] = []
        self._seq_counter = 0  # timeline event ordinal, not the wire seq
        self._closed = False
        self.fatal: Exception | None = None
        self._settled = asyncio.Event()  # online or fatal

    # -- lifecycle ----------------------------------------------------------

    async def start(self) -> None:
        self._run_task = asyncio.create_task(self._run(), name=f"agent-{self.name}")

    async def wait_ready(self, timeout: float = 10.0) -> None:
        await asyncio.wait_for(self._settled.wait(), timeout)
        if self.fatal is not None:
            raise self.fatal

    async def stop(self) -> None:
        self._closed = True
        if self._run_task is not None:
            self._run_task.cancel()
            try:
                await self._run_task
            except (asyncio.CancelledError, Exception):
                pass
        if self._writer is not None:
            self._writer.close()

    async def _run(self) -> None:
        attempt = 0
        while not self._closed:
            try:
                reader, writer = await asyncio.open_connection(
                    self.relay_host, self.relay_port, limit=MAX_LINE
                )
            except OSError as exc:
                attempt += 1
                delay = min(RECONNECT_CAP, RECONNECT_BASE * 2 ** min(attempt, 6))
                delay *= 0.5 + random.random() / 2
                log.info("relay unreachable (%s); retrying in %.1fs", exc, delay)
                await asyncio.sleep(delay)
                continue
            try:
                self._writer = writer
                await self._handshake(reader, writer)
                attempt = 0
                self.online.set()
                self._settled.set()
                self._notify_status(True)
                await self._read_loop(reader)
            except (RelayProtocolError, PqeError) as exc:
                # registration rejected or protocol violation: not retryable
                log.error("relay session failed: %s", exc)
                self.fatal = exc
                self._settled.set()
                writer.close()
                return
            except (ConnectionError, asyncio.IncompleteReadError, OSError) as exc:
                log.info("relay connection lost: %s", exc)
            finally:
                self.online.clear()
                self._notify_status(False)
                self._writer = None
                if self._pending is not None and not self._pending.done():
                    self._pending.set_exception(ConnectionError("relay connection lost"))
                writer.close()
            if not self._closed:
                attempt += 1
                delay = min(RECONNECT_CAP, RECONNECT_BASE * 2 ** min(attempt, 6))
                await asyncio.sleep(delay)

    async def _handshake(self, reader, writer) -> None:
        """REGISTER, publish our key, then read back our own key as a
        barrier proving the relay processed the publish."""
        reply = await self._request_on(
            reader, writer, Frame(type=FrameType.REGISTER, name=self.name)
        )
        if reply.type is not FrameType.REGISTER_OK:
            raise RelayProtocolError(
                reply.error_code.value if reply.error_code else "MALFORMED",
                reply.detail or "registration rejected",
            )
        writer.write(
            encode_frame(
                frame_with_payload(FrameType.PUBLISH_KEY, self.keystore.public_key.bytes)
            )
        )
        await writer.drain()
        reply = await self._request_on(
            reader, writer, Frame(type=FrameType.FETCH_KEY, peer=self.name)
        )
        if reply.type is not FrameType.KEY or reply.payload_bytes() != self.keystore.public_key.bytes:
            raise RelayProtocolError("MALFORMED", "relay failed to echo our published key")

    async def _request_on(self, reader, writer, frame: Frame) -> Frame:
        """Request/response during handshake, before the read loop runs."""
        writer.write(encode_frame(frame))
        await writer.drain()
        while True:
            line = await reader.readline()
            if not line:
                raise ConnectionError("relay closed during handshake")
            reply = decode_frame(line)
            if reply.type is FrameType.DELIVER:
                self._handle_deliver(reply)  # queued mail flushed on register
                continue
            return reply

    # -- reading ---------------------------------------------------------------

    async def _read_loop(self, reader) -> None:
        while True:
            line = await reader.readline()
            if not line:
                raise ConnectionError("relay closed connection")
            try:
                frame = decode_frame(line)
            except FrameError as exc:
                log.warning("undecodable frame from relay: %s", exc)
                continue
            if frame.type is FrameType.DELIVER:
                self._handle_deliver(frame)
            elif self._pending is not None and not self._pending.done():
                self._pending.set_result(frame)
            elif frame.type is FrameType.ERROR:
                code = frame.error_code.value if frame.error_code else "ERROR"
                self._emit(direction="notice", peer=None, failure=code, text=frame.detail)
            else:
                log.warning("unsolicited %s frame ignored", frame.type.value)

    def _handle_deliver(self, frame: Frame) -> None:
        try:
            raw = frame.payload_bytes()
        except FrameError:
            self._emit(direction="in", peer=frame.peer, failure="Malformed")
            return
        try:
            env = decode_envelope(raw)
        except MalformedEnvelope:
            self._emit(direction="in", peer=frame.peer, failure="Malformed")
            return
        if env.recipient != self.name:
            self._emit(direction="in", peer=env.sender, failure="Auth")
            return
        window = self._windows.setdefault(env.sender, ReplayWindow())
        try:
            plaintext = hybrid_open(self.keystore.secret_key, env, window)
        except ReplayFailure:
            self._emit(direction="in", peer=env.sender, seq=env.seq, failure="Replay")
            return
        except AuthFailure:
            self._emit(direction="in", peer=env.sender, seq=env.seq, failure="Auth")
            return
        except OpenFailure:
            self._emit(direction="in", peer=env.sender, seq=env.seq, failure="Malformed")
            return
        text = plaintext.decode("utf-8", errors="replace")
        self._emit(direction="in", peer=env.sender, seq=env.seq, text=text)

    # -- requests ----------------------------------------------------------------

    async def _request(self, frame: Frame) -> Frame:
        """Send one request frame and await the next routed reply."""
        if self._writer is None:
            raise ConnectionError("not connected to relay")
        async with self._request_lock:
            loop = asyncio.get_running_loop()
            self._pending = loop.create_future()
            try:
                self._writer.write(encode_frame(frame))
                await self._writer.drain()
                return await asyncio.wait_for(self._pending, timeout=10.0)
            finally:
                self._pending = None

    async def resolve_peer(self, peer: str) -> PeerRecord:
        """Fetch the peer's key and enforce the pin.

        First sight pins; a changed key raises FingerprintMismatch and the
        pin is left untouched. A peer pinned from a key file resolves even
        if the relay has no key for it yet.
        """
        try:
            reply = await self._request(Frame(type=FrameType.FETCH_KEY, peer=peer))
        except ConnectionError:
            pinned = self.peers.get(peer)
            if pinned is not None:
                return pinned
            raise
        if reply.type is FrameType.ERROR:
            if reply.error_code is not None and reply.error_code.value == "UNKNOWN_PEER":
                pinned = self.peers.get(peer)
                if pinned is not None:
                    return pinned  # preloaded pin; relay simply has no copy
            raise RelayProtocolError(
                reply.error_code.value if reply.error_code else "MALFORMED",
                reply.detail or "",
            )
        pk = KemPublicKey(reply.payload_bytes())
        return self.peers.verify_or_pin(peer, pk)

    async def repin_peer(self, peer: str) -> PeerRecord:
        """Explicitly accept the relay's current key for this peer."""
        reply = await self._request(Frame(type=FrameType.FETCH_KEY, peer=peer))
        if reply.type is FrameType.ERROR:
            raise RelayProtocolError(
                reply.error_code.value if reply.error_code else "MALFORMED",
                reply.detail or "",
            )
        record = self.peers.pin(peer, KemPublicKey(reply.payload_bytes()))
        self._sessions.pop(peer, None)
        return record

    async def send_message(self, peer: str, text: str) -> int:
        """Resolve (pin-checked), seal, and SEND. Returns the wire seq."""
        if not text:
            raise PqeError("refusing to send an empty message")
        record = await self.resolve_peer(peer)
        seq = self.seqs.next(peer)
        session = self._sessions.get(peer)
        if session is None or session._pk != record.public_key:
            session = SealSession(
                record.public_key,
                self.name,
                peer,
                rekey_every=self.rekey_every,
                version=self.version,
            )
            self._sessions[peer] = session
        env = session.seal(seq, text.encode("utf-8"))
        frame = frame_with_payload(FrameType.SEND, encode_envelope(env), peer=peer)
        if self._writer is None:
            raise ConnectionError("not connected to relay")
        self._writer.write(encode_frame(frame))
        await self._writer.drain()
        self._emit(direction="out", peer=peer, seq=seq, text=text)
        return seq

    # -- events ----------------------------------------------------------------

    def subscribe(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue()
        self._subscribers.append(q)
        return q

    def unsubscribe(self, q: asyncio.Queue) -> None:
        if q in self._subscribers:
            self._subscribers.remove(q)

    def _emit(
        self,
        direction: str,
        peer: str | None,
        text: str | None = None,
        failure: str | None = None,
        seq: int | None = None,
    ) -> None:
        self._seq_counter += 1
        event = {
            "kind": "message",
            "ordinal": self._seq_counter,
            "direction": direction,
            "peer": peer,
            "text": text,
            "failure": failure,
            "seq": seq,
            "timestamp": time.time(),
        }
        self.timeline.append(event)
        self._broadcast(event)
        if failure is not None:
            log.info("(%s) %s failure from %s", self.name, failure, peer or "relay")

    def _notify_status(self, online: bool) -> None:
        self._broadcast(
            {"kind": "status", "online": online, "timestamp": time.time()}
        )

    def _broadcast(self, event: dict) -> None:
        for q in list(self._subscribers):
            q.put_nowait(event)
