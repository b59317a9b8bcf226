"""Loopback HTTP API serving the web console for one running agent.

Crypto never crosses this boundary: the console sees names, fingerprints,
plaintext of the local user's own conversations, and failure notices --
never key bytes. Every route demands the bearer token printed at agent
startup (Authorization header, or ?token= for EventSource clients).

Push channel is Server-Sent Events: GET /events replays the agent's
timeline, then streams live events, so a reconnecting console rebuilds
exact state.
"""

import asyncio
import json
import secrets

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from .agent import ClientAgent
from .errors import FingerprintMismatch, PqeError, RelayProtocolError

HEARTBEAT_SECONDS = 15.0


class SendRequest(BaseModel):
    peer: str = Field(min_length=1, max_length=64)
    text: str = Field(min_length=1)


def new_token() -> str:
    return secrets.token_urlsafe(32)


def create_console_app(agent: ClientAgent, token: str) -> FastAPI:
    app = FastAPI(title="pqe console api", docs_url=None, redoc_url=None)

    def require_token(request: Request) -> None:
        header = request.headers.get("authorization", "")
        presented = header.removeprefix("Bearer ").strip() if header else request.query_params.get("token", "")
        if not presented or not secrets.compare_digest(presented, token):
            raise HTTPException(status_code=401, detail="missing or bad bearer token")

    auth = Depends(require_token)

    @app.get("/identity", dependencies=[auth])
    async def identity():
        from .agent import format_fingerprint

        return {
            "name": agent.name,
            "fingerprint": agent.keystore.fingerprint,
            "fingerprint_display": format_fingerprint(agent.keystore.fingerprint),
            "online": agent.online.is_set(),
        }

    @app.get("/peers", dependencies=[auth])
    async def peers():
        return [record.display() for record in agent.peers.all()]

    @app.post("/send", dependencies=[auth])
    async def send(body: SendRequest):
        try:
            seq = await agent.send_message(body.peer, body.text)
        except FingerprintMismatch as exc:
            raise HTTPException(
                status_code=409,
                detail={
                    "error": "FINGERPRINT_MISMATCH",
                    "peer": exc.peer,
                    "pinned": exc.pinned,
                    "fetched": exc.fetched,
                },
            )
        except RelayProtocolError as exc:
            status = 404 if exc.code == "UNKNOWN_PEER" else 502
            raise HTTPException(status_code=status, detail=str(exc))
        except ConnectionError as exc:
            raise HTTPException(status_code=503, detail=f"relay offline: {exc}")
        except PqeError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"seq": seq}

    @app.post("/peers/{name}/repin", dependencies=[auth])
    async def repin(name: str):
        try:
            record = await agent.repin_peer(name)
        except RelayProtocolError as exc:
            status = 404 if exc.code == "UNKNOWN_PEER" else 502
            raise HTTPException(status_code=status, detail=str(exc))
        except ConnectionError as exc:
            raise HTTPException(status_code=503, detail=f"relay offline: {exc}")
        return record.display()

    @app.get("/events", dependencies=[auth])
    async def events():
        queue = agent.subscribe()
        replay = list(agent.timeline)

        async def stream():
            try:
                for event in replay:
                    yield f"data: {json.dumps(event)}\n\n"
                while True:
                    try:
                        event = await asyncio.wait_for(queue.get(), HEARTBEAT_SECONDS)
                    except asyncio.TimeoutError:
                        yield ": ping\n\n"
                        continue
                    yield f"data: {json.dumps(event)}\n\n"
            finally:
                agent.unsubscribe(queue)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


async def serve_console(agent: ClientAgent, port: int, token: str) -> "uvicorn.Server":
    """Start uvicorn on loopback inside the current event loop."""
    import uvicorn

    config = uvicorn.Config(
        create_console_app(agent, token),
        host="127.0.0.1",
        port=port,
        log_level="warning",
    )
    server = uvicorn.Server(config)
    asyncio.get_running_loop().create_task(server.serve())
    while not server.started:
        await asyncio.sleep(0.02)
    return server
