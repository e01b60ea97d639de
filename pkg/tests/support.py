"""Shared test helpers: generators and independent oracles.

The oracles here intentionally re-derive results through a different
formulation than the code under test (matrix algebra for transforms,
exhaustive path enumeration for routing) so the two sides stay
independent.
"""

from __future__ import annotations

import math
import random
import socket
import string

from abmlink.geometry import GeometryFeature, SimTransform
from abmlink.manifest import SpeciesSyncSpec
from abmlink.protocol import (
    ActionResultPayload,
    ByePayload,
    ConnectPayload,
    DebugPayload,
    EntitySnapshot,
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
)


def free_port() -> int:
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


# -- Independent transform oracle ------------------------------------------------


def matrix_to_client(p, t: SimTransform):
    """Axis mapping done as an explicit matrix product (oracle path)."""
    sg = -1.0 if t.flip_vertical_axis else 1.0
    q = [p[i] - t.offset[i] for i in range(3)]
    m = [
        [1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, sg, 0.0],
    ]
    return tuple(sum(m[r][c] * q[c] for c in range(3)) * t.scale for r in range(3))


def heading_direction_sim(heading_deg: float):
    r = math.radians(heading_deg)
    return (math.cos(r), math.sin(r), 0.0)


def yaw_direction_client(yaw_deg: float):
    r = math.radians(yaw_deg)
    return (math.sin(r), 0.0, math.cos(r))


# -- Brute-force routing oracle -----------------------------------------------------


def brute_force_best_route(network, a: str, b: str):
    """All simple paths, minimized by (length, id-sequence). None if unreachable."""
    best = None

    def dfs(node, visited, length, path):
        nonlocal best
        if best is not None and length > best[0] + 1e-9:
            return
        if node == b:
            cand = (length, tuple(path))
            if (
                best is None
                or cand[0] < best[0] - 1e-9
                or (abs(cand[0] - best[0]) <= 1e-9 and cand[1] < best[1])
            ):
                best = cand
            return
        for sid in network.adjacent(node):
            seg = network.segments[sid]
            if seg.closed:
                continue
            nxt = seg.other_end(node)
            if nxt in visited:
                continue
            visited.add(nxt)
            path.append(sid)
            dfs(nxt, visited, length + seg.length_m, path)
            path.pop()
            visited.remove(nxt)

    dfs(a, {a}, 0.0, [])
    return best


# -- Random message generator ----------------------------------------------------------


def _name(rng: random.Random, n=8) -> str:
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(1, n)))


def _scalar(rng: random.Random):
    pick = rng.randrange(4)
    if pick == 0:
        return rng.random() < 0.5
    if pick == 1:
        return rng.randint(-1000, 1000)
    if pick == 2:
        return round(rng.uniform(-1e6, 1e6), rng.randint(0, 9))
    return _name(rng, 12)


def _scalar_map(rng: random.Random, max_items=4):
    return {_name(rng): _scalar(rng) for _ in range(rng.randint(0, max_items))}


def _vec3(rng: random.Random):
    return tuple(round(rng.uniform(-5000.0, 5000.0), 6) for _ in range(3))


def _transform(rng: random.Random) -> SimTransform:
    return SimTransform(
        scale=round(rng.uniform(0.01, 10.0), 6),
        offset=_vec3(rng),
        flip_vertical_axis=rng.random() < 0.5,
    )


def _sync_spec(rng: random.Random, species=None, mode=None) -> SpeciesSyncSpec:
    has_collider = rng.random() < 0.5
    return SpeciesSyncSpec(
        species=species or _name(rng),
        mode=mode or rng.choice(["per_step", "static_init", "background_only"]),
        dims=rng.choice(["2d", "3d"]),
        color=(rng.randint(0, 255), rng.randint(0, 255), rng.randint(0, 255)),
        tag=_name(rng),
        has_collider=has_collider,
        interactable=has_collider and rng.random() < 0.5,
        synced_attributes=[_name(rng) for _ in range(rng.randint(0, 3))],
    )


def random_feature(rng: random.Random, species=None, dims=None) -> GeometryFeature:
    shape_type = rng.choice(["point", "polyline", "polygon"])
    n = {"point": 1, "polyline": rng.randint(2, 6), "polygon": rng.randint(3, 8)}[shape_type]
    with_z = rng.random() < 0.5
    coords = [
        tuple(round(rng.uniform(-1000, 1000), 6) for _ in range(3 if with_z else 2))
        for _ in range(n)
    ]
    has_collider = rng.random() < 0.5
    return GeometryFeature(
        species=species or _name(rng),
        id=f"{_name(rng)}-{rng.randint(0, 999)}",
        dims=dims or rng.choice(["2d", "3d"]),
        shape_type=shape_type,
        coords=coords,
        height_m=round(rng.uniform(0, 50), 3),
        color=(rng.randint(0, 255), rng.randint(0, 255), rng.randint(0, 255)),
        tag=_name(rng),
        has_collider=has_collider,
        interactable=has_collider and rng.random() < 0.5,
        attributes=_scalar_map(rng),
    )


def _entity(rng: random.Random) -> EntitySnapshot:
    return EntitySnapshot(
        species=_name(rng),
        id=f"{_name(rng)}-{rng.randint(0, 99)}",
        location=_vec3(rng),
        heading_deg=rng.uniform(0.0, 359.999),
        attributes=_scalar_map(rng),
    )


def _world_init(rng: random.Random) -> WorldInitPayload:
    x0, y0 = rng.uniform(-1000, 0), rng.uniform(-1000, 0)
    specs = [_sync_spec(rng) for _ in range(rng.randint(0, 4))]
    static_specs = [s for s in specs if s.mode == "static_init"]
    features = []
    for s in static_specs:
        for _ in range(rng.randint(0, 2)):
            features.append(random_feature(rng, species=s.species))
    return WorldInitPayload(
        world_bounds=(x0, y0, x0 + rng.uniform(1, 2000), y0 + rng.uniform(1, 2000)),
        transform=_transform(rng),
        species_defs=specs,
        static_features=features,
        phase=PhasePayload(_name(rng), rng.choice([None, rng.uniform(0.1, 600)]))
        if rng.random() < 0.5
        else None,
        player_id=f"player-{rng.randint(0, 9)}" if rng.random() < 0.5 else None,
    )


def _step_update(rng: random.Random) -> StepUpdatePayload:
    entities = []
    seen = set()
    for e in (_entity(rng) for _ in range(rng.randint(0, 6))):
        if (e.species, e.id) not in seen:
            seen.add((e.species, e.id))
            entities.append(e)
    removed = []
    for _ in range(rng.randint(0, 3)):
        pair = (_name(rng), f"{_name(rng)}-{rng.randint(0, 99)}")
        if pair not in seen:
            removed.append(pair)
    return StepUpdatePayload(step=rng.randint(0, 10_000_000), entities=entities, removed=removed)


def _result(rng: random.Random, cls):
    status = rng.choice(["ok", "error"])
    return cls(
        request_id=_name(rng),
        status=status,
        value=_scalar(rng) if rng.random() < 0.6 else None,
        message=_name(rng) if status == "error" else None,
    )


_BUILDERS = {
    "connect": lambda rng: ConnectPayload(_name(rng, 32), rng.choice(["player", "observer"])),
    "handshake_ack": lambda rng: HandshakeAckPayload(f"c{rng.randint(0, 99)}"),
    "world_init": _world_init,
    "step_update": _step_update,
    "value_update": lambda rng: ValueUpdatePayload(_scalar_map(rng, 6)),
    "player_state": lambda rng: PlayerStatePayload(
        _vec3(rng), rng.uniform(0, 359.999), rng.uniform(-90, 90)
    ),
    "invoke_action": lambda rng: InvokeActionPayload(
        _name(rng), _name(rng), [_scalar(rng) for _ in range(rng.randint(0, 3))]
    ),
    "action_result": lambda rng: _result(rng, ActionResultPayload),
    "eval": lambda rng: EvalPayload(_name(rng), f"get global {_name(rng)}"),
    "eval_result": lambda rng: _result(rng, EvalResultPayload),
    "phase": lambda rng: PhasePayload(_name(rng), rng.choice([None, rng.uniform(0.5, 900)])),
    "phase_done": lambda rng: PhaseDonePayload(_name(rng)),
    "debug": lambda rng: DebugPayload(rng.choice(["info", "warn", "error"]), _name(rng, 40)),
    "reject": lambda rng: RejectPayload(rng.choice(["version_mismatch", "session_full", "bad_name"])),
    "bye": lambda rng: ByePayload(),
}


def random_message(rng: random.Random, kind: str | None = None) -> Message:
    kind = kind or rng.choice(list(_BUILDERS))
    return Message(kind=kind, seq=rng.randint(0, 1_000_000), payload=_BUILDERS[kind](rng))


def all_kinds():
    return list(_BUILDERS)
