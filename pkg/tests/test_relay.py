"""Relay behavior over real loopback sockets, and its structural blindness."""

import ast
import asyncio
import base64
import hashlib
import os
import subprocess
import sys
from pathlib import Path

import pytest

from conftest import run_async
from pqe.frames import ErrorCode, Frame, FrameType, decode_frame, encode_frame, frame_with_payload
from pqe.relay import QUEUE_CAP, RelayServer


class Wire:
    """Minimal scripted client speaking raw frames to the relay."""

    def __init__(self, reader, writer):
        self.reader = reader
        self.writer = writer

    @classmethod
    async def connect(cls, host, port):
        reader, writer = await asyncio.open_connection(host, port)
        return cls(reader, writer)

    async def send(self, frame: Frame):
        self.writer.write(encode_frame(frame))
        await self.writer.drain()

    async def send_raw(self, data: bytes):
        self.writer.write(data)
        await self.writer.drain()

    async def recv(self, timeout=5.0) -> Frame:
        line = await asyncio.wait_for(self.reader.readline(), timeout)
        assert line, "relay closed the connection"
        return decode_frame(line)

    async def register(self, name: str) -> Frame:
        await self.send(Frame(type=FrameType.REGISTER, name=name))
        return await self.recv()

    def close(self):
        self.writer.close()


async def start_relay():
    relay = RelayServer()
    host, port = await relay.start("127.0.0.1", 0)
    return relay, host, port


def test_register_and_log():
    async def scenario():
        relay, host, port = await start_relay()
        wire = await Wire.connect(host, port)
        reply = await wire.register("alice")
        assert reply.type is FrameType.REGISTER_OK
        assert "Registered alice" in relay.events
        wire.close()
        await relay.close()

    run_async(scenario())


def test_bad_name_rejected():
    async def scenario():
        relay, host, port = await start_relay()
        wire = await Wire.connect(host, port)
        for bad in ("Alice", "a b", "x" * 65, "naïve", "bob!"):
            await wire.send(Frame(type=FrameType.REGISTER, name=bad))
            reply = await wire.recv()
            assert reply.type is FrameType.ERROR, bad
            assert reply.error_code is ErrorCode.MALFORMED, bad
        wire.close()
        await relay.close()

    run_async(scenario())


def test_name_taken():
    async def scenario():
        relay, host, port = await start_relay()
        first = await Wire.connect(host, port)
        assert (await first.register("alice")).type is FrameType.REGISTER_OK
        second = await Wire.connect(host, port)
        reply = await second.register("alice")
        assert reply.type is FrameType.ERROR
        assert reply.error_code is ErrorCode.NAME_TAKEN
        # releasing the first connection frees the name
        first.close()
        await asyncio.sleep(0.05)
        third = await Wire.connect(host, port)
        assert (await third.register("alice")).type is FrameType.REGISTER_OK
        third.close()
        second.close()
        await relay.close()

    run_async(scenario())


def test_publish_fetch_identity():
    async def scenario():
        relay, host, port = await start_relay()
        owner = await Wire.connect(host, port)
        await owner.register("alice")
        key = os.urandom(1184)
        await owner.send(frame_with_payload(FrameType.PUBLISH_KEY, key))
        fetcher = await Wire.connect(host, port)
        await fetcher.send(Frame(type=FrameType.FETCH_KEY, peer="alice"))
        reply = await fetcher.recv()
        assert reply.type is FrameType.KEY
        assert reply.payload_bytes() == key  # byte identity
        owner.close()
        fetcher.close()
        await relay.close()

    run_async(scenario())


def test_fetch_unknown_peer():
    async def scenario():
        relay, host, port = await start_relay()
        wire = await Wire.connect(host, port)
        await wire.send(Frame(type=FrameType.FETCH_KEY, peer="ghost"))
        reply = await wire.recv()
        assert reply.type is FrameType.ERROR
        assert reply.error_code is ErrorCode.UNKNOWN_PEER
        wire.close()
        await relay.close()

    run_async(scenario())


def test_publish_wrong_length_rejected():
    async def scenario():
        relay, host, port = await start_relay()
        wire = await Wire.connect(host, port)
        await wire.register("alice")
        await wire.send(frame_with_payload(FrameType.PUBLISH_KEY, os.urandom(1183)))
        reply = await wire.recv()
        assert reply.type is FrameType.ERROR
        assert reply.error_code is ErrorCode.MALFORMED
        wire.close()
        await relay.close()

    run_async(scenario())


def test_send_deliver_byte_transparency():
    async def scenario():
        relay, host, port = await start_relay()
        alice = await Wire.connect(host, port)
        bob = await Wire.connect(host, port)
        await alice.register("alice")
        await bob.register("bob")
        payload = os.urandom(5000)
        await alice.send(frame_with_payload(FrameType.SEND, payload, peer="bob"))
        delivered = await bob.recv()
        assert delivered.type is FrameType.DELIVER
        assert delivered.peer == "alice"
        assert hashlib.sha256(delivered.payload_bytes()).digest() == hashlib.sha256(payload).digest()
        assert "Relayed message from alice to bob" in relay.events
        alice.close()
        bob.close()
        await relay.close()

    run_async(scenario())


def test_send_to_unknown_recipient():
    async def scenario():
        relay, host, port = await start_relay()
        alice = await Wire.connect(host, port)
        await alice.register("alice")
        await alice.send(frame_with_payload(FrameType.SEND, b"x", peer="nobody"))
        reply = await alice.recv()
        assert reply.error_code is ErrorCode.UNKNOWN_PEER
        alice.close()
        await relay.close()

    run_async(scenario())


def test_store_and_forward_fifo():
    async def scenario():
        relay, host, port = await start_relay()
        bob = await Wire.connect(host, port)
        await bob.register("bob")
        bob.close()
        await asyncio.sleep(0.05)

        alice = await Wire.connect(host, port)
        await alice.register("alice")
        payloads = [f"msg-{i}".encode() for i in range(3)]
        for p in payloads:
            await alice.send(frame_with_payload(FrameType.SEND, p, peer="bob"))
        await asyncio.sleep(0.05)
        assert relay.counters["queued"] == 3

        bob2 = await Wire.connect(host, port)
        reply = await bob2.register("bob")
        assert reply.type is FrameType.REGISTER_OK
        got = [await bob2.recv() for _ in payloads]
        assert [f.payload_bytes() for f in got] == payloads  # FIFO order
        assert all(f.type is FrameType.DELIVER and f.peer == "alice" for f in got)
        alice.close()
        bob2.close()
        await relay.close()

    run_async(scenario())


def test_queue_overflow_drops_oldest_and_reports():
    async def scenario():
        relay, host, port = await start_relay()
        bob = await Wire.connect(host, port)
        await bob.register("bob")
        bob.close()
        await asyncio.sleep(0.05)
        alice = await Wire.connect(host, port)
        await alice.register("alice")
        for i in range(QUEUE_CAP + 2):
            await alice.send(frame_with_payload(FrameType.SEND, b"%d" % i, peer="bob"))
        # two QUEUE_FULL notices for the two overflowing sends
        notices = [await alice.recv(), await alice.recv()]
        assert all(n.error_code is ErrorCode.QUEUE_FULL for n in notices)
        assert relay.counters["queue_dropped"] == 2

        bob2 = await Wire.connect(host, port)
        await bob2.register("bob")
        first = await bob2.recv()
        assert first.payload_bytes() == b"2"  # 0 and 1 were dropped
        alice.close()
        bob2.close()
        await relay.close()

    run_async(scenario())


def test_malformed_keeps_connection_alive():
    async def scenario():
        relay, host, port = await start_relay()
        wire = await Wire.connect(host, port)
        await wire.register("alice")
        await wire.send_raw(b"this is not json\n")
        reply = await wire.recv()
        assert reply.error_code is ErrorCode.MALFORMED
        # invalid base64 in an otherwise valid frame
        await wire.send_raw(b'{"type":"SEND","peer":"alice","payload":"@@@"}\n')
        reply = await wire.recv()
        assert reply.error_code is ErrorCode.MALFORMED
        # the connection still works
        await wire.send(Frame(type=FrameType.FETCH_KEY, peer="alice"))
        reply = await wire.recv()
        assert reply.type is FrameType.ERROR  # no key published, but alive
        wire.close()
        await relay.close()

    run_async(scenario())


def test_send_before_register_rejected():
    async def scenario():
        relay, host, port = await start_relay()
        wire = await Wire.connect(host, port)
        await wire.send(frame_with_payload(FrameType.SEND, b"x", peer="bob"))
        reply = await wire.recv()
        assert reply.error_code is ErrorCode.MALFORMED
        wire.close()
        await relay.close()

    run_async(scenario())


def test_liveness_every_send_delivered_once():
    async def scenario():
        relay, host, port = await start_relay()
        alice = await Wire.connect(host, port)
        bob = await Wire.connect(host, port)
        await alice.register("alice")
        await bob.register("bob")
        count = 50
        for i in range(count):
            await alice.send(frame_with_payload(FrameType.SEND, b"%d" % i, peer="bob"))
        got = [await bob.recv() for _ in range(count)]
        assert [g.payload_bytes() for g in got] == [b"%d" % i for i in range(count)]
        assert relay.counters["relayed"] == count
        alice.close()
        bob.close()
        await relay.close()

    run_async(scenario())


# ---------------------------------------------------------------------------
# Structural blindness
# ---------------------------------------------------------------------------

CRYPTO_MODULES = ("pqe.kem", "pqe.symmetric", "pqe.envelope")


def test_relay_source_imports_no_crypto():
    src_dir = Path(__file__).resolve().parent.parent / "src" / "pqe"
    for module_file in ("relay.py", "frames.py"):
        tree = ast.parse((src_dir / module_file).read_text())
        for node in ast.walk(tree):
            if isinstance(node, ast.Import):
                names = [a.name for a in node.names]
            elif isinstance(node, ast.ImportFrom):
                mod = node.module or ""
                names = [mod] + [f"{mod}.{a.name}" for a in node.names]
            else:
                continue
            for name in names:
                normalized = name.replace("pqe.", "").lstrip(".")
                for banned in ("kem", "symmetric", "envelope"):
                    assert not normalized.startswith(banned), (
                        f"{module_file} imports {name}"
                    )


def test_relay_import_graph_is_crypto_free():
    """Import pqe.relay in a clean interpreter and prove none of the crypto
    modules were pulled in transitively."""
    code = (
        "import sys; import pqe.relay; "
        "loaded = [m for m in sys.modules if m in %r]; "
        "print(','.join(loaded) or 'CLEAN')" % (CRYPTO_MODULES,)
    )
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "CLEAN", f"relay transitively imports: {out.stdout}"
