"""Transport plumbing shared by server, broker, and clients.

Covers per-connection sequence stamping, the bounded outbound queue
with its snapshot-drop policy, inbound sequence checking, and the
routing envelope used on the broker-simulation link:

    {"kind": "envelope", "protocol_version": n, "seq": n,
     "client_id": "c0" | null, "frame": {...}}

A null client_id marks a broadcast frame; the reserved id ``_broker``
addresses the broker itself (gate control and session summary).
"""

from __future__ import annotations

import asyncio
import json
from collections import deque
from typing import Any

from .protocol import (
    MalformedFrame,
    Message,
    PROTOCOL_VERSION,
    SchemaViolation,
    decode_message,
    encode_message,
)

BROKER_ID = "_broker"

# Frames the backpressure policy may discard, most expendable first.
# Action/eval results and handshake-scoped frames are never dropped.
DROPPABLE_KINDS = ("step_update", "value_update", "debug")


class BoundedOutbox:
    """Per-client outbound queue with real-time drop semantics.

    When full, the oldest queued step_update is discarded (then the
    oldest value_update, then debug); results and handshake frames are
    never dropped and may push the queue past its bound.
    """

    def __init__(self, max_queue: int = 64):
        self.max_queue = max_queue
        self._items: deque[tuple[str, bytes]] = deque()
        self._ready = asyncio.Event()
        self.dropped = 0
        self.closed = False

    def __len__(self):
        return len(self._items)

    def push(self, kind: str, frame: bytes) -> str | None:
        """Queue a frame; returns the kind of a dropped frame, if any."""
        dropped = None
        if len(self._items) >= self.max_queue:
            for candidate in DROPPABLE_KINDS:
                for i, (k, _) in enumerate(self._items):
                    if k == candidate:
                        del self._items[i]
                        dropped = candidate
                        self.dropped += 1
                        break
                if dropped:
                    break
        self._items.append((kind, frame))
        self._ready.set()
        return dropped

    async def get(self) -> bytes | None:
        while not self._items:
            if self.closed:
                return None
            self._ready.clear()
            await self._ready.wait()
        return self._items.popleft()[1]

    def close(self):
        self.closed = True
        self._ready.set()


class SeqChecker:
    """Tracks per-sender sequence monotonicity on one connection."""

    def __init__(self):
        self._last: int | None = None

    def admit(self, seq: int) -> bool:
        if self._last is not None and seq <= self._last:
            return False
        self._last = seq
        return True


class FrameStamper:
    """Allocates the per-sender sequence numbers for one connection."""

    def __init__(self, protocol_version: int = PROTOCOL_VERSION):
        self.protocol_version = protocol_version
        self._next = 0

    def next_seq(self) -> int:
        seq = self._next
        self._next += 1
        return seq

    def stamp(self, kind: str, payload) -> Message:
        return Message(
            kind=kind, seq=self.next_seq(), payload=payload, protocol_version=self.protocol_version
        )

    def encode(self, kind: str, payload) -> bytes:
        return encode_message(self.stamp(kind, payload))


def encode_envelope(seq: int, client_id: str | None, frame: Message | bytes) -> bytes:
    inner = frame if isinstance(frame, (bytes, bytearray)) else encode_message(frame)
    doc = {
        "kind": "envelope",
        "protocol_version": PROTOCOL_VERSION,
        "seq": seq,
        "client_id": client_id,
        "frame": json.loads(inner),
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def decode_envelope(data: bytes | str) -> tuple[str | None, Message]:
    """Unwrap one envelope; returns (client_id, inner message)."""
    if isinstance(data, (bytes, bytearray)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedFrame(f"invalid UTF-8: {exc}") from exc
    else:
        text = data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFrame(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("kind") != "envelope":
        raise SchemaViolation("not an envelope frame")
    client_id = doc.get("client_id")
    if client_id is not None and not isinstance(client_id, str):
        raise SchemaViolation("envelope.client_id: expected a string or null")
    inner = doc.get("frame")
    if not isinstance(inner, dict):
        raise SchemaViolation("envelope.frame: expected an object")
    return client_id, decode_message(json.dumps(inner))


def scalar_payload_dict(values: dict[str, Any]) -> dict[str, Any]:
    return {"values": dict(values)}
