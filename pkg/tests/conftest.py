import asyncio
import json
import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS))  # for reference.py oracles


def run_async(coro, timeout: float = 60.0):
    """Run a coroutine to completion on a fresh event loop."""

    async def bounded():
        return await asyncio.wait_for(coro, timeout)

    return asyncio.run(bounded())


class TapProxy:
    """TCP proxy recording every byte that crosses it, both directions."""

    def __init__(self, upstream_host, upstream_port):
        self.upstream = (upstream_host, upstream_port)
        self.capture = bytearray()
        self._server = None

    async def start(self) -> int:
        self._server = await asyncio.start_server(self._on_conn, "127.0.0.1", 0)
        return self._server.sockets[0].getsockname()[1]

    async def _on_conn(self, reader, writer):
        try:
            up_reader, up_writer = await asyncio.open_connection(*self.upstream)
        except OSError:
            writer.close()
            return

        async def pump(src, dst):
            try:
                while True:
                    chunk = await src.read(65536)
                    if not chunk:
                        break
                    self.capture.extend(chunk)
                    dst.write(chunk)
                    await dst.drain()
            except ConnectionError:
                pass
            finally:
                try:
                    dst.close()
                except Exception:
                    pass

        await asyncio.gather(pump(reader, up_writer), pump(up_reader, writer))

    async def close(self):
        if self._server:
            self._server.close()
            await self._server.wait_closed()


@pytest.fixture(scope="session")
def mlkem_vectors():
    return json.loads((TESTS / "vectors" / "mlkem768.json").read_text())["vectors"]


@pytest.fixture(scope="session")
def gcm_vectors():
    return json.loads((TESTS / "vectors" / "aes256gcm.json").read_text())["vectors"]


@pytest.fixture(scope="session")
def keypair():
    from pqe.kem import kem_generate_keypair

    return kem_generate_keypair()
