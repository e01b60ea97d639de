#!/usr/bin/env python3
"""Regenerate the golden frame corpus (golden/*.frame).

One canonical frame per message kind plus edge cases. Deterministic:
rerunning reproduces the committed bytes exactly. Cross-implementation
conformance means decoding every file and re-encoding it byte-for-byte.
"""

from __future__ import annotations

import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from abmlink.geometry import EntitySnapshot, GeometryFeature, SimTransform  # noqa: E402
from abmlink.manifest import SpeciesSyncSpec  # noqa: E402
from abmlink.protocol import (  # noqa: E402
    ActionResultPayload,
    ByePayload,
    ConnectPayload,
    DebugPayload,
    EvalPayload,
    EvalResultPayload,
    HandshakeAckPayload,
    InvokeActionPayload,
    Message,
    PhaseDonePayload,
    PhasePayload,
    PlayerStatePayload,
    RejectPayload,
    StepUpdatePayload,
    ValueUpdatePayload,
    WorldInitPayload,
    encode_message,
)

GOLDEN = ROOT / "golden"


def corpus() -> dict[str, Message]:
    road = GeometryFeature(
        species="road",
        id="R3",
        dims="2d",
        shape_type="polyline",
        coords=[(0.0, 0.0), (120.0, 0.0)],
        height_m=0.0,
        color=(30, 30, 30),
        tag="road",
        has_collider=True,
        interactable=True,
        attributes={"closed": False, "from": "n00", "to": "n01"},
    )
    building = GeometryFeature(
        species="building",
        id="B7",
        dims="3d",
        shape_type="polygon",
        coords=[(10.0, 10.0), (26.0, 10.0), (26.0, 22.0), (10.0, 22.0)],
        height_m=15.0,
        color=(170, 170, 160),
        tag="building",
        has_collider=True,
        interactable=False,
        attributes={"pollution_band": 2},
    )
    world_init = WorldInitPayload(
        world_bounds=(-50.0, -50.0, 530.0, 350.0),
        transform=SimTransform(scale=0.1, offset=(240.0, 150.0, 0.0), flip_vertical_axis=False),
        species_defs=[
            SpeciesSyncSpec("car", "per_step", dims="3d", color=(60, 120, 220), tag="vehicle"),
            SpeciesSyncSpec(
                "road",
                "static_init",
                dims="2d",
                color=(30, 30, 30),
                tag="road",
                has_collider=True,
                interactable=True,
            ),
            SpeciesSyncSpec(
                "building",
                "static_init",
                dims="3d",
                color=(170, 170, 160),
                tag="building",
                has_collider=True,
            ),
        ],
        static_features=[road, building],
        phase=PhasePayload("lobby", None),
        player_id="player-0",
    )
    step_update = StepUpdatePayload(
        step=42,
        entities=[
            EntitySnapshot("car", "car-0", (12.5, 80.0, 0.0), 270.0, {}),
            EntitySnapshot("motorcycle", "motorcycle-3", (300.25, 199.875, 0.0), 45.5, {}),
            EntitySnapshot("road", "R3", (60.0, 0.0, 0.0), 0.0, {"closed": True}),
            EntitySnapshot("player", "player-0", (240.0, 150.0, 1.7), 90.0, {"pitch_deg": -12.0}),
        ],
        removed=[("car", "car-7")],
    )
    return {
        "connect": Message("connect", 0, ConnectPayload("quest-3", "player")),
        "handshake_ack": Message("handshake_ack", 0, HandshakeAckPayload("c0")),
        "world_init": Message("world_init", 1, world_init),
        "step_update": Message("step_update", 2, step_update),
        "step_update_empty": Message("step_update", 3, StepUpdatePayload(step=0)),
        "value_update": Message(
            "value_update",
            4,
            ValueUpdatePayload(
                {"production": 59.8, "solid_pollution": 20.5, "water_pollution": 15.3}
            ),
        ),
        "player_state": Message(
            "player_state", 5, PlayerStatePayload((1.5, 0.0, -2.25), 359.25, -45.0)
        ),
        "invoke_action": Message(
            "invoke_action", 6, InvokeActionPayload("req-1", "toggle_road", ["R3"])
        ),
        "action_result": Message(
            "action_result", 7, ActionResultPayload("req-1", "ok", value=True)
        ),
        "action_result_error": Message(
            "action_result",
            8,
            ActionResultPayload("req-2", "error", message="UnknownTarget: road 'R999'"),
        ),
        "eval": Message("eval", 9, EvalPayload("req-3", "get global score")),
        "eval_result": Message("eval_result", 10, EvalResultPayload("req-3", "ok", value=876)),
        "phase": Message("phase", 11, PhasePayload("exploration", 120.0)),
        "phase_done": Message("phase_done", 12, PhaseDonePayload("exploration")),
        "debug": Message("debug", 13, DebugPayload("warn", "backpressure: dropped one step_update frame")),
        "reject": Message("reject", 0, RejectPayload("session_full")),
        "bye": Message("bye", 14, ByePayload()),
    }


def main():
    GOLDEN.mkdir(exist_ok=True)
    for old in GOLDEN.glob("*.frame"):
        old.unlink()
    for i, (name, msg) in enumerate(corpus().items()):
        path = GOLDEN / f"{i:03d}_{name}.frame"
        path.write_bytes(encode_message(msg))
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
