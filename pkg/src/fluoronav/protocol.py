"""Wire protocol for the session service. Single source of truth.

All messages are JSON objects over a bidirectional stream (WebSocket).
Every message carries ``v`` (protocol version, currently 1). Requests
carry a client-chosen ``id`` echoed on the matching response. Unsolicited
server pushes carry no ``id``.

Client -> server requests (``type`` field):

  create_session   {scene: object | "default", log?: bool}
                   -> ok {session_id, phase, c_arm_labels}
  attach_reference {session_id}                  -> ok {phase}
  take_shot        {session_id, label}           -> ok {shot report}
  start_navigation {session_id}                  -> ok {phase, view_ids,
                                                        target_overlays}
  tick             {session_id, frames?: int}    -> n overlay pushes, then
                                                   ok {frames}
  steer            {session_id, translation_mm: [x,y,z],
                    rotation_deg: [rx,ry,rz]}    -> ok {clamped}
  insert           {session_id}                  -> ok {grade report}
  get_state        {session_id}                  -> ok {session state}
  get_events       {session_id, kinds?: [str]}   -> ok {events: [...]};
                                                   the session event log, so
                                                   a client that reconnects
                                                   can rebuild its panes
  subscribe        {session_id}                  -> ok {}; this connection
                                                   also receives overlay
                                                   pushes for the session

Server -> client:

  ok       {v, id, type: "ok", result: object}
  error    {v, id?, type: "error", code, message}
           codes: bad_request | validation | illegal_transition |
                  unknown_session | runtime
  overlay  {v, type: "overlay", session_id, seq, frame_index,
            timestamp_ms, overlays: [OverlaySegment], readout}

OverlaySegment: {view_id, tip_2d_mm: [x, y] | null,
                 axis_points_2d_mm: [[x, y], ...], clipped, degenerate,
                 error: string | null}
readout: {phase, exposure_total_s, trajectory_error: {angle_deg,
          entry_offset_mm, tip_offset_at_depth_mm} | null,
          grade_preview: string | null}

The shot report and grade report payloads are exactly the dictionaries
returned by Session.take_shot and Session.insert_and_grade.
"""
from __future__ import annotations

PROTOCOL_VERSION = 1

REQUEST_TYPES = frozenset(
    {
        "create_session",
        "attach_reference",
        "take_shot",
        "start_navigation",
        "tick",
        "steer",
        "insert",
        "get_state",
        "get_events",
        "subscribe",
    }
)

ERR_BAD_REQUEST = "bad_request"
ERR_VALIDATION = "validation"
ERR_ILLEGAL_TRANSITION = "illegal_transition"
ERR_UNKNOWN_SESSION = "unknown_session"
ERR_RUNTIME = "runtime"


def ok(request_id, result: dict) -> dict:
    return {"v": PROTOCOL_VERSION, "id": request_id, "type": "ok", "result": result}


def error(request_id, code: str, message: str) -> dict:
    return {"v": PROTOCOL_VERSION, "id": request_id, "type": "error", "code": code, "message": message}


def overlay_push(session_id: str, seq: int, frame_payload: dict) -> dict:
    return {
        "v": PROTOCOL_VERSION,
        "type": "overlay",
        "session_id": session_id,
        "seq": seq,
        "frame_index": frame_payload["frame_index"],
        "timestamp_ms": frame_payload["timestamp_ms"],
        "overlays": frame_payload["overlays"],
        "readout": frame_payload["readout"],
    }
