"""Zero-trust message relay.

Registers named clients over persistent TCP connections, serves published
public keys from an in-memory directory, and forwards opaque envelope
payloads between clients, queueing up to 128 envelopes per offline
recipient (oldest dropped first on overflow).

The relay is structurally blind: this module (and frames.py) must not
import kem, symmetric, or envelope — payloads are validated only for
base64 well-formedness and size, never parsed. A public key here is just
"1184 bytes after base64 decode". The dependency rule is enforced by a
test that imports this module in a clean interpreter and audits
sys.modules.
"""

import asyncio
import logging
import re
from collections import deque
from dataclasses import dataclass, field

from .frames import (
    MAX_LINE,
    ErrorCode,
    Frame,
    FrameError,
    FrameType,
    decode_frame,
    encode_frame,
)

log = logging.getLogger("pqe.relay")

NAME_RE = re.compile(r"^[a-z0-9_-]{1,64}$")
PUBKEY_LEN = 1184          # size gate only; the bytes stay opaque
QUEUE_CAP = 128
EVENT_CAP = 1000


@dataclass
class _Client:
    name: str
    writer: asyncio.StreamWriter | None = None
    pubkey_b64: str | None = None
    queue: deque = field(default_factory=deque)  # of (sender, payload_b64)

    @property
    def online(self) -> bool:
        return self.writer is not None and not self.writer.is_closing()


class RelayServer:
    """One directory, many connections, single event loop."""

    def __init__(self):
        self._clients: dict[str, _Client] = {}
        self._server: asyncio.AbstractServer | None = None
        self.events: deque[str] = deque(maxlen=EVENT_CAP)
        self.counters = {
            "registered": 0,
            "relayed": 0,
            "queued": 0,
            "queue_dropped": 0,
            "errors": 0,
        }

    # -- lifecycle -----------------------------------------------------------

    async def start(self, host: str = "127.0.0.1", port: int = 65432) -> tuple[str, int]:
        self._server = await asyncio.start_server(
            self._handle_connection, host, port, limit=MAX_LINE
        )
        actual = self._server.sockets[0].getsockname()
        self._event(f"Server running on {actual[0]}:{actual[1]}")
        return actual[0], actual[1]

    async def serve_forever(self) -> None:
        assert self._server is not None, "start() first"
        async with self._server:
            await self._server.serve_forever()

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    def _event(self, message: str) -> None:
        self.events.append(message)
        log.info("%s", message)

    # -- connection handling ---------------------------------------------------

    async def _handle_connection(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        bound: str | None = None
        try:
            while True:
                try:
                    line = await reader.readline()
                except (asyncio.LimitOverrunError, ValueError):
                    await self._error(writer, ErrorCode.MALFORMED, "line too long")
                    break
                if not line:
                    break
                if line.strip() == b"":
                    continue
                try:
                    frame = decode_frame(line)
                except FrameError as exc:
                    await self._error(writer, ErrorCode.MALFORMED, str(exc))
                    continue
                bound = await self._dispatch(frame, bound, writer)
        except ConnectionError:
            pass
        finally:
            if bound is not None:
                client = self._clients.get(bound)
                if client is not None and client.writer is writer:
                    client.writer = None
                    self._event(f"Disconnected {bound}")
            writer.close()

    async def _dispatch(self, frame: Frame, bound: str | None, writer) -> str | None:
        if frame.type is FrameType.REGISTER:
            return await self._handle_register(frame, bound, writer)
        if frame.type is FrameType.PUBLISH_KEY:
            await self._handle_publish(frame, bound, writer)
        elif frame.type is FrameType.FETCH_KEY:
            await self._handle_fetch(frame, writer)
        elif frame.type is FrameType.SEND:
            await self._handle_send(frame, bound, writer)
        else:
            await self._error(writer, ErrorCode.MALFORMED, f"unexpected {frame.type.value}")
        return bound

    # -- frame handlers ---------------------------------------------------------

    async def _handle_register(self, frame: Frame, bound: str | None, writer) -> str | None:
        name = frame.name or ""
        if bound is not None:
            await self._error(writer, ErrorCode.MALFORMED, "connection already registered")
            return bound
        if not NAME_RE.match(name):
            await self._error(writer, ErrorCode.MALFORMED, "name must match [a-z0-9_-]{1,64}")
            return None
        client = self._clients.get(name)
        if client is not None and client.online:
            await self._error(writer, ErrorCode.NAME_TAKEN, f"{name} already connected")
            return None
        if client is None:
            client = _Client(name=name)
            self._clients[name] = client
        client.writer = writer
        self.counters["registered"] += 1
        await self._write(writer, Frame(type=FrameType.REGISTER_OK, name=name))
        self._event(f"Registered {name}")
        while client.queue and client.online:
            sender, payload = client.queue.popleft()
            await self._write(
                writer, Frame(type=FrameType.DELIVER, peer=sender, payload=payload)
            )
            self.counters["relayed"] += 1
            self._event(f"Relayed message from {sender} to {name}")
        return name

    async def _handle_publish(self, frame: Frame, bound: str | None, writer) -> None:
        if bound is None:
            await self._error(writer, ErrorCode.MALFORMED, "register before publishing")
            return
        try:
            raw = frame.payload_bytes()
        except FrameError as exc:
            await self._error(writer, ErrorCode.MALFORMED, str(exc))
            return
        if len(raw) != PUBKEY_LEN:
            await self._error(
                writer, ErrorCode.MALFORMED, f"public key must be {PUBKEY_LEN} bytes"
            )
            return
        self._clients[bound].pubkey_b64 = frame.payload
        self._event(f"Stored public key for {bound}")

    async def _handle_fetch(self, frame: Frame, writer) -> None:
        peer = frame.peer or ""
        client = self._clients.get(peer)
        if client is None or client.pubkey_b64 is None:
            await self._error(writer, ErrorCode.UNKNOWN_PEER, f"no key published for {peer!r}")
            return
        await self._write(
            writer, Frame(type=FrameType.KEY, peer=peer, payload=client.pubkey_b64)
        )

    async def _handle_send(self, frame: Frame, bound: str | None, writer) -> None:
        if bound is None:
            await self._error(writer, ErrorCode.MALFORMED, "register before sending")
            return
        to = frame.peer or ""
        recipient = self._clients.get(to)
        if recipient is None:
            await self._error(writer, ErrorCode.UNKNOWN_PEER, f"{to!r} never registered")
            return
        if frame.payload is None:
            await self._error(writer, ErrorCode.MALFORMED, "SEND requires a payload")
            return
        try:
            frame.payload_bytes()  # base64 + size gate only; contents stay opaque
        except FrameError as exc:
            await self._error(writer, ErrorCode.MALFORMED, str(exc))
            return
        if recipient.online:
            await self._write(
                recipient.writer,
                Frame(type=FrameType.DELIVER, peer=bound, payload=frame.payload),
            )
            self.counters["relayed"] += 1
            self._event(f"Relayed message from {bound} to {to}")
        else:
            dropped = False
            if len(recipient.queue) >= QUEUE_CAP:
                recipient.queue.popleft()
                self.counters["queue_dropped"] += 1
                dropped = True
            recipient.queue.append((bound, frame.payload))
            self.counters["queued"] += 1
            self._event(f"Queued message from {bound} to {to}")
            if dropped:
                await self._error(
                    writer, ErrorCode.QUEUE_FULL, f"queue for {to} overflowed; oldest dropped"
                )

    # -- writes -----------------------------------------------------------------

    async def _write(self, writer, frame: Frame) -> None:
        if writer is None or writer.is_closing():
            return
        writer.write(encode_frame(frame))
        try:
            await writer.drain()
        except ConnectionError:
            pass

    async def _error(self, writer, code: ErrorCode, detail: str) -> None:
        self.counters["errors"] += 1
        self._event(f"Error {code.value}: {detail}")
        await self._write(
            writer, Frame(type=FrameType.ERROR, error_code=code, detail=detail)
        )
