"""Wire protocol: codec round-trips, canonical bytes, handshake gating."""

from __future__ import annotations

import json
import random

import pytest

from abmlink.protocol import (
    ByePayload,
    ConnectPayload,
    EncodingError,
    MalformedFrame,
    Message,
    PROTOCOL_VERSION,
    PlayerStatePayload,
    SchemaViolation,
    StepUpdatePayload,
    UnknownKind,
    ValueUpdatePayload,
    decode_message,
    encode_message,
    validate_handshake,
)
from support import all_kinds, random_message


def test_bye_frame_bytes_are_pinned():
    msg = Message("bye", 0, ByePayload())
    assert encode_message(msg) == b'{"kind":"bye","protocol_version":1,"seq":0,"payload":{}}'


def test_empty_step_update_round_trips():
    msg = Message("step_update", 3, StepUpdatePayload(step=0))
    decoded = decode_message(encode_message(msg))
    assert decoded.payload.entities == []
    assert decoded.payload.removed == []
    assert decoded == msg


def test_round_trip_1000_random_messages():
    rng = random.Random(20240917)
    for i in range(1000):
        msg = random_message(rng)
        assert decode_message(encode_message(msg)) == msg, f"message {i} ({msg.kind})"


def test_every_kind_round_trips():
    rng = random.Random(7)
    for kind in all_kinds():
        for _ in range(25):
            msg = random_message(rng, kind)
            assert decode_message(encode_message(msg)) == msg


def test_encoding_is_deterministic_across_dict_insertion_orders():
    a = ValueUpdatePayload({"alpha": 1, "beta": 2.5, "gamma": "x"})
    b = ValueUpdatePayload(dict(reversed(list({"alpha": 1, "beta": 2.5, "gamma": "x"}.items()))))
    assert encode_message(Message("value_update", 5, a)) == encode_message(
        Message("value_update", 5, b)
    )


def test_float_precision_survives_round_trip():
    loc = (0.1 + 0.2, 1e-9, 123456.789012345)
    msg = Message("player_state", 0, PlayerStatePayload(loc, 359.9999999, -89.999999))
    decoded = decode_message(encode_message(msg))
    assert decoded.payload.location == loc
    assert decoded.payload.yaw_deg == 359.9999999


def test_unknown_kind_rejected():
    frame = b'{"kind":"zorp","protocol_version":1,"seq":0,"payload":{}}'
    with pytest.raises(UnknownKind):
        decode_message(frame)


def test_malformed_json_rejected():
    with pytest.raises(MalformedFrame):
        decode_message(b"{nope")
    with pytest.raises(MalformedFrame):
        decode_message(b"\xff\xfe\x00broken")
    with pytest.raises(MalformedFrame):
        decode_message(b"[1,2,3]")


def test_missing_required_field_is_schema_violation():
    frame = b'{"kind":"connect","protocol_version":1,"seq":0,"payload":{"desired_role":"player"}}'
    with pytest.raises(SchemaViolation):
        decode_message(frame)


def test_unknown_payload_fields_ignored():
    frame = (
        b'{"kind":"connect","protocol_version":1,"seq":0,'
        b'"payload":{"client_name":"p1","desired_role":"player","hat":"fedora"}}'
    )
    msg = decode_message(frame)
    assert msg.payload == ConnectPayload("p1", "player")


def test_player_state_zero_orientation_example():
    frame = (
        b'{"kind":"player_state","protocol_version":1,"seq":3,'
        b'"payload":{"location":[0,0,0],"yaw_deg":0,"pitch_deg":0}}'
    )
    msg = decode_message(frame)
    assert msg.payload.location == (0.0, 0.0, 0.0)
    assert msg.payload.yaw_deg == 0.0
    assert msg.payload.pitch_deg == 0.0


def test_player_state_range_violations_rejected():
    base = {"location": [0, 0, 0], "yaw_deg": 0, "pitch_deg": 0}
    for bad in ({"yaw_deg": 360.0}, {"pitch_deg": 90.5}, {"yaw_deg": -0.1}):
        doc = {"kind": "player_state", "protocol_version": 1, "seq": 0, "payload": {**base, **bad}}
        with pytest.raises(SchemaViolation):
            decode_message(json.dumps(doc).encode())


def test_step_update_overlap_rejected():
    doc = {
        "kind": "step_update",
        "protocol_version": 1,
        "seq": 0,
        "payload": {
            "step": 1,
            "entities": [
                {
                    "species": "car",
                    "id": "car-0",
                    "location": [0, 0, 0],
                    "heading_deg": 0,
                    "attributes": {},
                }
            ],
            "removed": [["car", "car-0"]],
        },
    }
    with pytest.raises(SchemaViolation):
        decode_message(json.dumps(doc).encode())


def test_encode_rejects_invalid_payload_values():
    with pytest.raises(EncodingError):
        encode_message(Message("player_state", 0, PlayerStatePayload((0, 0, 0), 400.0, 0.0)))
    with pytest.raises(EncodingError):
        encode_message(
            Message("player_state", 0, PlayerStatePayload((float("nan"), 0, 0), 0.0, 0.0))
        )
    with pytest.raises(EncodingError):
        encode_message(Message("connect", 0, ConnectPayload("", "player")))


def test_non_finite_numbers_rejected_on_decode():
    frame = (
        b'{"kind":"player_state","protocol_version":1,"seq":0,'
        b'"payload":{"location":[NaN,0,0],"yaw_deg":0,"pitch_deg":0}}'
    )
    with pytest.raises(MalformedFrame):
        decode_message(frame)


def test_frames_never_contain_raw_newlines():
    rng = random.Random(99)
    for _ in range(200):
        assert b"\n" not in encode_message(random_message(rng))


class TestHandshake:
    def _connect(self, name="p1", role="player", version=PROTOCOL_VERSION):
        return Message("connect", 0, ConnectPayload(name, role), protocol_version=version)

    def test_matching_version_accepted(self):
        decision = validate_handshake(self._connect(), PROTOCOL_VERSION)
        assert decision.accepted and decision.reason is None

    def test_version_mismatch_rejected(self):
        decision = validate_handshake(self._connect(version=2), 1)
        assert not decision.accepted
        assert decision.reason == "version_mismatch"

    def test_session_full_rejected_for_players_only(self):
        full = validate_handshake(self._connect(), PROTOCOL_VERSION, has_capacity=False)
        assert not full.accepted and full.reason == "session_full"
        observer = validate_handshake(
            self._connect(role="observer"), PROTOCOL_VERSION, has_capacity=False
        )
        assert observer.accepted

    def test_blank_name_rejected(self):
        decision = validate_handshake(self._connect(name="   "), PROTOCOL_VERSION)
        assert not decision.accepted and decision.reason == "bad_name"
