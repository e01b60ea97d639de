"""Wire protocol: the message vocabulary and its canonical JSON encoding.

Every unit exchanged between simulation, broker, and clients is a
``Message``: a kind tag, a protocol version, a per-sender sequence
number, and a kind-specific payload. Frames are canonical UTF-8 JSON
with a fixed key order and no whitespace, so equal messages always
produce byte-identical frames. Over a raw byte stream, frames are
newline-delimited; a frame never contains a raw newline.

Decoding tolerates unknown payload fields (forward compatibility) but
treats a missing or ill-typed required field as a SchemaViolation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

from .geometry import EntitySnapshot, GeometryFeature, SimTransform
from .geometry import GeometryError, ParseError, PropertyError
from .manifest import SpeciesSyncSpec, ValidationError

PROTOCOL_VERSION = 1

KINDS = (
    "connect",
    "handshake_ack",
    "world_init",
    "step_update",
    "value_update",
    "player_state",
    "invoke_action",
    "action_result",
    "eval",
    "eval_result",
    "phase",
    "phase_done",
    "debug",
    "reject",
    "bye",
)

ROLES = ("player", "observer")
REJECT_REASONS = ("version_mismatch", "session_full", "bad_name")
DEBUG_LEVELS = ("info", "warn", "error")
RESULT_STATUSES = ("ok", "error")

Scalar = bool | int | float | str
Vec3 = tuple[float, float, float]


class ProtocolError(Exception):
    """Base class for wire-level failures."""


class EncodingError(ProtocolError):
    """The payload violates its schema and cannot be framed."""


class MalformedFrame(ProtocolError):
    """Frame is not valid UTF-8 JSON; fatal to the connection."""


class UnknownKind(ProtocolError):
    """Frame kind is not in the vocabulary; non-fatal."""


class SchemaViolation(ProtocolError):
    """A required payload field is missing or ill-typed; non-fatal."""


def is_scalar(v: Any) -> bool:
    return isinstance(v, (bool, int, float, str))


def _fail(path: str, msg: str):
    raise SchemaViolation(f"{path}: {msg}")


def _str(d: dict, key: str, path: str, max_len: int | None = None) -> str:
    v = d.get(key)
    if not isinstance(v, str):
        _fail(f"{path}.{key}", "expected a string")
    if max_len is not None and not (1 <= len(v) <= max_len):
        _fail(f"{path}.{key}", f"length must be 1..{max_len}")
    return v


def _num(d: dict, key: str, path: str) -> float:
    v = d.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(f"{path}.{key}", "expected a number")
    if not math.isfinite(v):
        _fail(f"{path}.{key}", "must be finite")
    return v


def _vec3(d: dict, key: str, path: str) -> Vec3:
    v = d.get(key)
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        _fail(f"{path}.{key}", "expected a 3-vector")
    out = []
    for c in v:
        if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
            _fail(f"{path}.{key}", "components must be finite numbers")
        out.append(float(c))
    return tuple(out)


def _scalar_map(d: dict, key: str, path: str) -> dict[str, Scalar]:
    v = d.get(key)
    if not isinstance(v, dict):
        _fail(f"{path}.{key}", "expected an object")
    for name, value in v.items():
        if not isinstance(name, str) or not name:
            _fail(f"{path}.{key}", "names must be non-empty strings")
        if not is_scalar(value):
            _fail(f"{path}.{key}.{name}", "values must be scalars")
    return dict(v)


def _enum(d: dict, key: str, path: str, allowed: tuple[str, ...]) -> str:
    v = _str(d, key, path)
    if v not in allowed:
        _fail(f"{path}.{key}", f"{v!r} not one of {allowed}")
    return v


# --- Payloads ---------------------------------------------------------------


@dataclass
class ConnectPayload:
    client_name: str
    desired_role: str = "player"

    def to_dict(self):
        return {"client_name": self.client_name, "desired_role": self.desired_role}

    @classmethod
    def from_dict(cls, d, path="connect"):
        return cls(
            client_name=_str(d, "client_name", path, max_len=64),
            desired_role=_enum(d, "desired_role", path, ROLES),
        )


@dataclass
class HandshakeAckPayload:
    client_id: str

    def to_dict(self):
        return {"client_id": self.client_id}

    @classmethod
    def from_dict(cls, d, path="handshake_ack"):
        return cls(client_id=_str(d, "client_id", path))


@dataclass
class RejectPayload:
    reason: str

    def to_dict(self):
        return {"reason": self.reason}

    @classmethod
    def from_dict(cls, d, path="reject"):
        return cls(reason=_enum(d, "reason", path, REJECT_REASONS))


@dataclass
class PhasePayload:
    name: str
    duration_s: float | None = None

    def to_dict(self):
        return {
            "name": self.name,
            "duration_s": None if self.duration_s is None else float(self.duration_s),
        }

    @classmethod
    def from_dict(cls, d, path="phase"):
        name = _str(d, "name", path)
        dur = d.get("duration_s")
        if dur is not None:
            if isinstance(dur, bool) or not isinstance(dur, (int, float)) or not dur > 0:
                _fail(f"{path}.duration_s", "must be a positive number or null")
            dur = float(dur)
        return cls(name=name, duration_s=dur)


@dataclass
class PhaseDonePayload:
    name: str

    def to_dict(self):
        return {"name": self.name}

    @classmethod
    def from_dict(cls, d, path="phase_done"):
        return cls(name=_str(d, "name", path))


@dataclass
class WorldInitPayload:
    """Everything a client needs to build the scene once."""

    world_bounds: tuple[float, float, float, float]  # min_x, min_y, max_x, max_y
    transform: SimTransform
    species_defs: list[SpeciesSyncSpec] = field(default_factory=list)
    static_features: list[GeometryFeature] = field(default_factory=list)
    phase: PhasePayload | None = None
    player_id: str | None = None

    def to_dict(self):
        mnx, mny, mxx, mxy = self.world_bounds
        d: dict[str, Any] = {
            "world_bounds": {
                "min_x": float(mnx),
                "min_y": float(mny),
                "max_x": float(mxx),
                "max_y": float(mxy),
            },
            "transform": self.transform.to_dict(),
            "species_defs": [s.to_dict() for s in self.species_defs],
            "static_features": [f.to_dict() for f in self.static_features],
        }
        if self.phase is not None:
            d["phase"] = self.phase.to_dict()
        if self.player_id is not None:
            d["player_id"] = self.player_id
        return d

    @classmethod
    def from_dict(cls, d, path="world_init"):
        wb = d.get("world_bounds")
        if not isinstance(wb, dict):
            _fail(f"{path}.world_bounds", "expected an object")
        bounds = tuple(_num(wb, k, f"{path}.world_bounds") for k in ("min_x", "min_y", "max_x", "max_y"))
        if not (bounds[2] > bounds[0] and bounds[3] > bounds[1]):
            _fail(f"{path}.world_bounds", "must have positive area")
        if not isinstance(d.get("transform"), dict):
            _fail(f"{path}.transform", "expected an object")
        try:
            transform = SimTransform.from_dict(d["transform"])
            specs = [
                SpeciesSyncSpec.from_dict(s, f"{path}.species_defs[{i}]")
                for i, s in enumerate(d.get("species_defs", []))
            ]
            feats = [GeometryFeature.from_dict(f) for f in d.get("static_features", [])]
        except (ParseError, GeometryError, PropertyError, ValidationError) as exc:
            _fail(path, str(exc))
        static_modes = {(s.species, s.mode) for s in specs}
        for f in feats:
            if (f.species, "static_init") not in static_modes:
                _fail(
                    f"{path}.static_features",
                    f"species {f.species!r} has no static_init spec in species_defs",
                )
        phase = None
        if d.get("phase") is not None:
            if not isinstance(d["phase"], dict):
                _fail(f"{path}.phase", "expected an object")
            phase = PhasePayload.from_dict(d["phase"], f"{path}.phase")
        player_id = d.get("player_id")
        if player_id is not None and not isinstance(player_id, str):
            _fail(f"{path}.player_id", "expected a string")
        return cls(bounds, transform, specs, feats, phase, player_id)


@dataclass
class StepUpdatePayload:
    """Full per-step snapshot of synced agents plus removals."""

    step: int
    entities: list[EntitySnapshot] = field(default_factory=list)
    removed: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self):
        return {
            "step": self.step,
            "entities": [e.to_dict() for e in self.entities],
            "removed": [[s, i] for s, i in self.removed],
        }

    @classmethod
    def from_dict(cls, d, path="step_update"):
        step = d.get("step")
        if isinstance(step, bool) or not isinstance(step, int) or step < 0:
            _fail(f"{path}.step", "expected a non-negative integer")
        raw_entities = d.get("entities")
        if not isinstance(raw_entities, list):
            _fail(f"{path}.entities", "expected a list")
        try:
            entities = [EntitySnapshot.from_dict(e) for e in raw_entities]
        except ParseError as exc:
            _fail(f"{path}.entities", str(exc))
        raw_removed = d.get("removed", [])
        if not isinstance(raw_removed, list):
            _fail(f"{path}.removed", "expected a list")
        removed = []
        for pair in raw_removed:
            if (
                not isinstance(pair, (list, tuple))
                or len(pair) != 2
                or not all(isinstance(p, str) for p in pair)
            ):
                _fail(f"{path}.removed", f"expected [species, id] pairs, got {pair!r}")
            removed.append((pair[0], pair[1]))
        present = {(e.species, e.id) for e in entities}
        overlap = present & set(removed)
        if overlap:
            _fail(f"{path}.removed", f"{sorted(overlap)} also present in entities")
        return cls(step, entities, removed)


@dataclass
class ValueUpdatePayload:
    values: dict[str, Scalar] = field(default_factory=dict)

    def to_dict(self):
        return {"values": {k: self.values[k] for k in sorted(self.values)}}

    @classmethod
    def from_dict(cls, d, path="value_update"):
        return cls(values=_scalar_map(d, "values", path))


@dataclass
class PlayerStatePayload:
    location: Vec3
    yaw_deg: float
    pitch_deg: float = 0.0

    def to_dict(self):
        return {
            "location": [float(c) for c in self.location],
            "yaw_deg": float(self.yaw_deg),
            "pitch_deg": float(self.pitch_deg),
        }

    @classmethod
    def from_dict(cls, d, path="player_state"):
        location = _vec3(d, "location", path)
        yaw = _num(d, "yaw_deg", path)
        pitch = _num(d, "pitch_deg", path)
        if not (0.0 <= yaw < 360.0):
            _fail(f"{path}.yaw_deg", f"{yaw} outside [0, 360)")
        if not (-90.0 <= pitch <= 90.0):
            _fail(f"{path}.pitch_deg", f"{pitch} outside [-90, 90]")
        return cls(location, float(yaw), float(pitch))


@dataclass
class InvokeActionPayload:
    request_id: str
    action: str
    args: list[Scalar] = field(default_factory=list)

    def to_dict(self):
        return {"request_id": self.request_id, "action": self.action, "args": list(self.args)}

    @classmethod
    def from_dict(cls, d, path="invoke_action"):
        args = d.get("args", [])
        if not isinstance(args, list) or not all(is_scalar(a) for a in args):
            _fail(f"{path}.args", "expected a list of scalars")
        return cls(
            request_id=_str(d, "request_id", path),
            action=_str(d, "action", path),
            args=list(args),
        )


@dataclass
class ActionResultPayload:
    request_id: str
    status: str
    value: Scalar | None = None
    message: str | None = None

    def to_dict(self):
        d: dict[str, Any] = {"request_id": self.request_id, "status": self.status}
        if self.value is not None:
            d["value"] = self.value
        if self.message is not None:
            d["message"] = self.message
        return d

    @classmethod
    def from_dict(cls, d, path="action_result"):
        value = d.get("value")
        if value is not None and not is_scalar(value):
            _fail(f"{path}.value", "expected a scalar")
        message = d.get("message")
        if message is not None and not isinstance(message, str):
            _fail(f"{path}.message", "expected a string")
        return cls(
            request_id=_str(d, "request_id", path),
            status=_enum(d, "status", path, RESULT_STATUSES),
            value=value,
            message=message,
        )


@dataclass
class EvalPayload:
    request_id: str
    command: str

    def to_dict(self):
        return {"request_id": self.request_id, "command": self.command}

    @classmethod
    def from_dict(cls, d, path="eval"):
        return cls(request_id=_str(d, "request_id", path), command=_str(d, "command", path))


class EvalResultPayload(ActionResultPayload):
    """Result of an eval request; mirrors ActionResultPayload."""


@dataclass
class DebugPayload:
    level: str
    text: str

    def to_dict(self):
        return {"level": self.level, "text": self.text}

    @classmethod
    def from_dict(cls, d, path="debug"):
        text = d.get("text")
        if not isinstance(text, str):
            _fail(f"{path}.text", "expected a string")
        return cls(level=_enum(d, "level", path, DEBUG_LEVELS), text=text)


@dataclass
class ByePayload:
    def to_dict(self):
        return {}

    @classmethod
    def from_dict(cls, d, path="bye"):
        return cls()


PAYLOAD_TYPES = {
    "connect": ConnectPayload,
    "handshake_ack": HandshakeAckPayload,
    "world_init": WorldInitPayload,
    "step_update": StepUpdatePayload,
    "value_update": ValueUpdatePayload,
    "player_state": PlayerStatePayload,
    "invoke_action": InvokeActionPayload,
    "action_result": ActionResultPayload,
    "eval": EvalPayload,
    "eval_result": EvalResultPayload,
    "phase": PhasePayload,
    "phase_done": PhaseDonePayload,
    "debug": DebugPayload,
    "reject": RejectPayload,
    "bye": ByePayload,
}


@dataclass
class Message:
    """One wire frame: kind tag, version, per-sender sequence number, payload."""

    kind: str
    seq: int
    payload: Any
    protocol_version: int = PROTOCOL_VERSION


def encode_message(msg: Message) -> bytes:
    """Encode a message as one canonical UTF-8 JSON frame.

    Key order is fixed (kind, protocol_version, seq, payload; payload
    fields in declaration order, free-form maps sorted), so encoding is
    byte-deterministic. Floats are emitted with round-trip precision.
    """
    if msg.kind not in PAYLOAD_TYPES:
        raise EncodingError(f"unknown kind {msg.kind!r}")
    if isinstance(msg.protocol_version, bool) or not isinstance(msg.protocol_version, int) or msg.protocol_version < 1:
        raise EncodingError("protocol_version must be a positive integer")
    if isinstance(msg.seq, bool) or not isinstance(msg.seq, int) or msg.seq < 0:
        raise EncodingError("seq must be a non-negative integer")
    expected = PAYLOAD_TYPES[msg.kind]
    if not isinstance(msg.payload, expected):
        raise EncodingError(
            f"{msg.kind} payload must be {expected.__name__}, got {type(msg.payload).__name__}"
        )
    try:
        payload_dict = msg.payload.to_dict()
        expected.from_dict(payload_dict)  # enforce schema symmetrically with decode
    except (SchemaViolation, ParseError, GeometryError, PropertyError) as exc:
        raise EncodingError(f"{msg.kind}: {exc}") from exc
    frame = {
        "kind": msg.kind,
        "protocol_version": msg.protocol_version,
        "seq": msg.seq,
        "payload": payload_dict,
    }
    try:
        text = json.dumps(frame, separators=(",", ":"), ensure_ascii=False, allow_nan=False)
    except ValueError as exc:
        raise EncodingError(str(exc)) from exc
    return text.encode("utf-8")


def decode_message(data: bytes | bytearray | str) -> Message:
    """Decode one complete frame into a Message.

    Unknown payload fields are ignored. MalformedFrame (bad UTF-8/JSON)
    is fatal to a connection; UnknownKind and SchemaViolation are not.
    """
    if isinstance(data, (bytes, bytearray)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedFrame(f"invalid UTF-8: {exc}") from exc
    else:
        text = data
    try:
        doc = json.loads(
            text,
            parse_constant=lambda c: (_ for _ in ()).throw(ValueError(f"non-finite number {c}")),
        )
    except ValueError as exc:
        raise MalformedFrame(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedFrame("frame must be a JSON object")
    kind = doc.get("kind")
    if not isinstance(kind, str):
        raise SchemaViolation("kind: expected a string")
    if kind not in PAYLOAD_TYPES:
        raise UnknownKind(f"unknown kind {kind!r}")
    version = doc.get("protocol_version")
    if isinstance(version, bool) or not isinstance(version, int) or version < 1:
        raise SchemaViolation("protocol_version: expected a positive integer")
    seq = doc.get("seq")
    if isinstance(seq, bool) or not isinstance(seq, int) or seq < 0:
        raise SchemaViolation("seq: expected a non-negative integer")
    payload_doc = doc.get("payload")
    if not isinstance(payload_doc, dict):
        raise SchemaViolation("payload: expected an object")
    payload = PAYLOAD_TYPES[kind].from_dict(payload_doc, kind)
    return Message(kind=kind, seq=seq, payload=payload, protocol_version=version)


@dataclass
class HandshakeDecision:
    accepted: bool
    reason: str | None = None  # one of REJECT_REASONS when rejected


def validate_handshake(
    connect: Message, supported_version: int, *, has_capacity: bool = True
) -> HandshakeDecision:
    """Decide whether a connect frame is admitted.

    On accept the server replies handshake_ack with the assigned client
    id; on reject it replies reject with the returned reason and closes.
    ``has_capacity`` is false when the player slots are exhausted.
    """
    if connect.kind != "connect":
        raise ValueError(f"not a connect frame: {connect.kind}")
    if connect.protocol_version != supported_version:
        return HandshakeDecision(False, "version_mismatch")
    name = connect.payload.client_name
    if not name.strip() or len(name) > 64:
        return HandshakeDecision(False, "bad_name")
    if connect.payload.desired_role == "player" and not has_capacity:
        return HandshakeDecision(False, "session_full")
    return HandshakeDecision(True)
