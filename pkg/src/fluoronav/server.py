"""WebSocket host for the session API.

One state machine per session, driven by whichever connection sends the
command; overlay pushes go to the commanding connection and to any
subscribers. The simulated clock only advances on tick requests, so a
driving client fully controls determinism.
"""
from __future__ import annotations

import asyncio
import json
import uuid
from pathlib import Path

from websockets.asyncio.server import serve

from . import protocol
from .errors import (
    FluoroNavError,
    IllegalTransition,
    SceneValidationError,
    UnknownSession,
)
from .navigation import SteerCommand
from .scene import default_scene, scene_from_dict
from .session import Session


class SessionHub:
    """Owns sessions and their subscriber sets."""

    def __init__(self, log_dir: str | Path | None = None):
        self.log_dir = Path(log_dir) if log_dir else None
        self.sessions: dict[str, Session] = {}
        self.subscribers: dict[str, set] = {}

    def create(self, scene_doc) -> Session:
        if scene_doc == "default" or scene_doc is None:
            scene = default_scene()
        else:
            scene = scene_from_dict(scene_doc)
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            session_id = uuid.uuid4().hex[:12]
            session = Session(scene, session_id=session_id, log_path=self.log_dir / f"{session_id}.jsonl")
        else:
            session = Session(scene)
        self.sessions[session.session_id] = session
        self.subscribers.setdefault(session.session_id, set())
        return session

    def get(self, session_id: str) -> Session:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise UnknownSession(session_id) from None


def _as_error(exc: Exception) -> tuple[str, str]:
    if isinstance(exc, SceneValidationError):
        return protocol.ERR_VALIDATION, str(exc)
    if isinstance(exc, UnknownSession):
        return protocol.ERR_UNKNOWN_SESSION, str(exc)
    if isinstance(exc, IllegalTransition):
        return protocol.ERR_ILLEGAL_TRANSITION, str(exc)
    if isinstance(exc, FluoroNavError):
        return protocol.ERR_RUNTIME, str(exc)
    return protocol.ERR_RUNTIME, f"{type(exc).__name__}: {exc}"


async def _send(ws, message: dict) -> None:
    await ws.send(json.dumps(message, sort_keys=True))


async def handle_message(hub: SessionHub, ws, raw: str) -> None:
    try:
        msg = json.loads(raw)
    except json.JSONDecodeError:
        await _send(ws, protocol.error(None, protocol.ERR_BAD_REQUEST, "not valid JSON"))
        return
    request_id = msg.get("id")
    kind = msg.get("type")
    if kind not in protocol.REQUEST_TYPES:
        await _send(ws, protocol.error(request_id, protocol.ERR_BAD_REQUEST, f"unknown type {kind!r}"))
        return
    try:
        if kind == "create_session":
            session = hub.create(msg.get("scene", "default"))
            await _send(ws, protocol.ok(request_id, {
                "session_id": session.session_id,
                "phase": session.phase.value,
                "c_arm_labels": sorted(session.world.c_arm_poses),
            }))
            return

        session = hub.get(msg.get("session_id", ""))
        if kind == "attach_reference":
            await _send(ws, protocol.ok(request_id, session.attach_reference()))
        elif kind == "take_shot":
            await _send(ws, protocol.ok(request_id, session.take_shot(msg.get("label", "AP"))))
        elif kind == "start_navigation":
            await _send(ws, protocol.ok(request_id, session.start_navigation()))
        elif kind == "tick":
            frames = int(msg.get("frames", 1))
            if not 1 <= frames <= 1000:
                raise ValueError("frames must be in [1, 1000]")
            payloads = session.tick(frames)
            targets = {ws} | hub.subscribers.get(session.session_id, set())
            for payload in payloads:
                push = protocol.overlay_push(session.session_id, session.events[-1].seq, payload)
                for target in list(targets):
                    try:
                        await _send(target, push)
                    except Exception:
                        hub.subscribers[session.session_id].discard(target)
            await _send(ws, protocol.ok(request_id, {"frames": len(payloads)}))
        elif kind == "steer":
            command = SteerCommand(
                tuple(msg.get("translation_mm", (0.0, 0.0, 0.0))),
                tuple(msg.get("rotation_deg", (0.0, 0.0, 0.0))),
            )
            await _send(ws, protocol.ok(request_id, session.steer(command)))
        elif kind == "insert":
            await _send(ws, protocol.ok(request_id, session.insert_and_grade()))
        elif kind == "get_state":
            await _send(ws, protocol.ok(request_id, session.state()))
        elif kind == "get_events":
            kinds = msg.get("kinds")
            events = [
                e.to_dict()
                for e in session.events
                if kinds is None or e.kind in kinds
            ]
            await _send(ws, protocol.ok(request_id, {"events": events}))
        elif kind == "subscribe":
            hub.subscribers.setdefault(session.session_id, set()).add(ws)
            await _send(ws, protocol.ok(request_id, {}))
    except (ValueError, TypeError, KeyError) as exc:
        await _send(ws, protocol.error(request_id, protocol.ERR_BAD_REQUEST, f"{type(exc).__name__}: {exc}"))
    except Exception as exc:  # noqa: BLE001 - surfaced to the client
        code, message = _as_error(exc)
        await _send(ws, protocol.error(request_id, code, message))


async def serve_forever(host: str = "127.0.0.1", port: int = 8765, log_dir=None, ready=None):
    hub = SessionHub(log_dir)

    async def handler(ws):
        try:
            async for raw in ws:
                await handle_message(hub, ws, raw)
        finally:
            for subs in hub.subscribers.values():
                subs.discard(ws)

    async with serve(handler, host, port) as server:
        if ready is not None:
            ready(server)
        await asyncio.get_running_loop().create_future()


def run_server(host: str = "127.0.0.1", port: int = 8765, log_dir=None):
    asyncio.run(serve_forever(host, port, log_dir))
