"""Test harness for the console end-to-end check.

Boots a relay plus two agents (alice, bob) with their console APIs on
ephemeral loopback ports, prints one JSON line with ports and tokens, then
executes control commands from stdin:

    substitute <name>   swap <name>'s published key in the relay directory
                        (simulates a malicious relay) and reply "ok"
    quit                shut down

Used by e2e/run.mjs; not part of the shipped package.
"""

import asyncio
import base64
import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "src"))

from pqe.agent import ClientAgent, PeerRegistry, SeqState, init_identity
from pqe.console_api import new_token, serve_console
from pqe.kem import kem_generate_keypair
from pqe.relay import RelayServer


async def main() -> None:
    relay = RelayServer()
    host, port = await relay.start("127.0.0.1", 0)
    tmp = tempfile.TemporaryDirectory(prefix="pqe-console-e2e-")
    agents = {}
    consoles = {}
    for name in ("alice", "bob"):
        home = Path(tmp.name) / name
        agent = ClientAgent(
            name, host, port,
            init_identity(name, home),
            PeerRegistry(home / "pins.json"),
            SeqState(home / "seq.json"),
        )
        await agent.start()
        await agent.wait_ready()
        token = new_token()
        server = await serve_console(agent, 0, token)
        api_port = server.servers[0].sockets[0].getsockname()[1]
        agents[name] = agent
        consoles[name] = {"port": api_port, "token": token}

    print(json.dumps({"consoles": consoles}), flush=True)

    loop = asyncio.get_running_loop()
    reader = asyncio.StreamReader()
    await loop.connect_read_pipe(
        lambda: asyncio.StreamReaderProtocol(reader), sys.stdin
    )
    while True:
        line = (await reader.readline()).decode().strip()
        if not line or line == "quit":
            break
        if line.startswith("substitute "):
            victim = line.split(None, 1)[1]
            replacement, _ = kem_generate_keypair()
            relay._clients[victim].pubkey_b64 = base64.b64encode(replacement.bytes).decode()
            print("ok", flush=True)
    for agent in agents.values():
        await agent.stop()
    await relay.close()


if __name__ == "__main__":
    asyncio.run(main())
