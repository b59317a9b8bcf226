"""Relay wire protocol: newline-delimited single-line JSON frames.

Shared by the relay server and the client agent. Deliberately free of any
cryptography import: payloads are opaque base64 here, and the relay's
blindness is enforced structurally by keeping this module (and relay.py)
independent of the kem/symmetric/envelope modules.

Frame fields by type::

    REGISTER     name                 client -> relay
    REGISTER_OK  name                 relay  -> client
    PUBLISH_KEY  payload              client -> relay   (no ack on success)
    FETCH_KEY    peer                 client -> relay
    KEY          peer, payload        relay  -> client
    SEND         peer, payload        client -> relay   (peer = recipient)
    DELIVER      peer, payload        relay  -> client  (peer = sender)
    ERROR        error_code, detail   relay  -> client
"""

import base64
import binascii
import json
from dataclasses import dataclass
from enum import Enum


class FrameType(str, Enum):
    REGISTER = "REGISTER"
    REGISTER_OK = "REGISTER_OK"
    FETCH_KEY = "FETCH_KEY"
    KEY = "KEY"
    PUBLISH_KEY = "PUBLISH_KEY"
    SEND = "SEND"
    DELIVER = "DELIVER"
    ERROR = "ERROR"


class ErrorCode(str, Enum):
    UNKNOWN_PEER = "UNKNOWN_PEER"
    NAME_TAKEN = "NAME_TAKEN"
    MALFORMED = "MALFORMED"
    QUEUE_FULL = "QUEUE_FULL"


MAX_NAME = 64
MAX_PAYLOAD = 2 << 20          # decoded bytes cap (2 MiB encoded envelope)
MAX_LINE = 4 << 20             # serialized frame cap, and the stream limit

_FIELDS = {"type", "name", "peer", "payload", "error_code", "detail"}


class FrameError(ValueError):
    """Line is not a well-formed frame."""


@dataclass(frozen=True)
class Frame:
    type: FrameType
    name: str | None = None
    peer: str | None = None
    payload: str | None = None       # base64 text, opaque
    error_code: ErrorCode | None = None
    detail: str | None = None

    def payload_bytes(self) -> bytes:
        """Decode the base64 payload. Raises FrameError if invalid."""
        if self.payload is None:
            raise FrameError("frame has no payload")
        try:
            raw = base64.b64decode(self.payload, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise FrameError(f"invalid base64 payload: {exc}") from None
        if len(raw) > MAX_PAYLOAD:
            raise FrameError("payload exceeds size cap")
        return raw


def frame_with_payload(ftype: FrameType, raw: bytes, **kw) -> Frame:
    if len(raw) > MAX_PAYLOAD:
        raise FrameError("payload exceeds size cap")
    return Frame(type=ftype, payload=base64.b64encode(raw).decode("ascii"), **kw)


def encode_frame(frame: Frame) -> bytes:
    doc = {"type": frame.type.value}
    for key in ("name", "peer", "payload", "detail"):
        value = getattr(frame, key)
        if value is not None:
            doc[key] = value
    if frame.error_code is not None:
        doc["error_code"] = frame.error_code.value
    line = json.dumps(doc, separators=(",", ":"), sort_keys=True)
    data = line.encode("utf-8") + b"\n"
    if len(data) > MAX_LINE:
        raise FrameError("frame exceeds line cap")
    return data


def decode_frame(line: bytes) -> Frame:
    if len(line) > MAX_LINE:
        raise FrameError("frame exceeds line cap")
    try:
        doc = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FrameError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FrameError("frame must be a JSON object")
    unknown = set(doc) - _FIELDS
    if unknown:
        raise FrameError(f"unknown fields: {sorted(unknown)}")
    try:
        ftype = FrameType(doc["type"])
    except (KeyError, ValueError):
        raise FrameError("missing or unknown frame type") from None
    for key in ("name", "peer"):
        value = doc.get(key)
        if value is not None:
            if not isinstance(value, str) or not 1 <= len(value.encode()) <= MAX_NAME:
                raise FrameError(f"{key} must be a string of 1..{MAX_NAME} bytes")
    payload = doc.get("payload")
    if payload is not None and not isinstance(payload, str):
        raise FrameError("payload must be a base64 string")
    error_code = None
    if doc.get("error_code") is not None:
        try:
            error_code = ErrorCode(doc["error_code"])
        except ValueError:
            raise FrameError("unknown error code") from None
    detail = doc.get("detail")
    if detail is not None and not isinstance(detail, str):
        raise FrameError("detail must be a string")
    return Frame(
        type=ftype,
        name=doc.get("name"),
        peer=doc.get("peer"),
        payload=payload,
        error_code=error_code,
        detail=detail,
    )
