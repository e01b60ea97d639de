"""Session recording and deterministic replay.

``record`` attaches to a live server as an observer and writes every
received frame with its arrival timestamp, one JSON object per line,
after a header that embeds the manifest and seed. ``replay`` rebuilds
the same world headlessly and regenerates the step_update/value_update
stream; any divergence from the recorded stream is reported with the
first divergent step.

Only the deterministic broadcast stream is compared: step_update and
value_update frames. Phase and debug frames depend on wall-clock
arrival and are recorded but not replayed. An observer cannot see other
clients' inbound frames, so replay covers observer-only sessions.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import time
from dataclasses import dataclass

import websockets

from .kernel import World
from .linker import Linker
from .manifest import CouplingManifest
from .protocol import ConnectPayload, Message, decode_message, encode_message
from .scenarios import get_scenario
from .wire import FrameStamper

HASHED_KINDS = ("step_update", "value_update")


class RecordingError(Exception):
    pass


def _payload_hash(kind: str, payload) -> str:
    doc = {"kind": kind, "payload": payload.to_dict()}
    text = json.dumps(doc, separators=(",", ":"), ensure_ascii=False, allow_nan=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


async def record_session(
    uri: str,
    out_path: str,
    manifest: CouplingManifest,
    seed: int,
    max_frames: int | None = None,
    max_seconds: float | None = None,
    name: str = "recorder",
    scenario_params: dict | None = None,
):
    """Observe a session and write it to ``out_path``.

    Stops at the server's bye, the frame/second limits, or connection
    close, whichever comes first. Returns the number of frames written.
    """
    stamper = FrameStamper()
    written = 0
    t0 = time.monotonic()
    async with websockets.connect(uri, ping_interval=5, ping_timeout=15) as ws:
        await ws.send(stamper.encode("connect", ConnectPayload(name, "observer")))
        first = decode_message(await asyncio.wait_for(ws.recv(), timeout=10.0))
        if first.kind == "reject":
            raise RecordingError(f"rejected: {first.payload.reason}")
        if first.kind != "handshake_ack":
            raise RecordingError(f"expected handshake_ack, got {first.kind}")
        with open(out_path, "w", encoding="utf-8") as fh:
            header = {
                "type": "session",
                "seed": seed,
                "manifest": manifest.to_dict(),
                "scenario_params": scenario_params or {},
                "recorded_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            }
            fh.write(json.dumps(header, separators=(",", ":")) + "\n")
            try:
                while True:
                    budget = None
                    if max_seconds is not None:
                        budget = max(0.0, max_seconds - (time.monotonic() - t0))
                        if budget == 0.0:
                            break
                    raw = await asyncio.wait_for(ws.recv(), timeout=budget)
                    msg = decode_message(raw)
                    t_ms = round((time.monotonic() - t0) * 1000.0, 3)
                    entry = {"t_ms": t_ms, "frame": json.loads(bytes(encode_message(msg)))}
                    fh.write(json.dumps(entry, separators=(",", ":")) + "\n")
                    written += 1
                    if msg.kind == "bye":
                        break
                    if max_frames is not None and written >= max_frames:
                        break
            except (asyncio.TimeoutError, websockets.ConnectionClosed):
                pass
    return written


def load_recording(path: str) -> tuple[dict, list[Message]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise RecordingError("empty recording")
    header = json.loads(lines[0])
    if header.get("type") != "session":
        raise RecordingError("missing session header")
    frames = []
    for line in lines[1:]:
        entry = json.loads(line)
        frames.append(decode_message(json.dumps(entry["frame"])))
    return header, frames


def emission_stream(
    manifest: CouplingManifest,
    seed: int,
    max_frames: int,
    step_cap: int | None = None,
    scenario_params: dict | None = None,
):
    """Regenerate the broadcast stream of an idle (observer-only) session.

    Yields (step, kind, payload) tuples in emission order until
    ``max_frames`` frames have been produced or ``step_cap`` steps run.
    """
    scenario = get_scenario(manifest.scenario)
    world = World(rng_seed=seed)
    scenario.install(world, step_period_ms=manifest.step_period_ms, **(scenario_params or {}))
    linker = Linker(world, manifest, scenario)
    produced = 0
    steps = 0
    cap = step_cap if step_cap is not None else max_frames * 4 + 100
    while produced < max_frames and steps < cap:
        world.step()
        world.outbox.clear()  # phase/debug frames are not part of the hashed stream
        steps += 1
        linker.tick()
        step_p, value_p = linker.build_step_update()
        if step_p is not None:
            produced += 1
            yield (world.step_count, "step_update", step_p)
        if value_p is not None:
            produced += 1
            yield (world.step_count, "value_update", value_p)


@dataclass
class ReplayResult:
    ok: bool
    frames_compared: int = 0
    divergence_index: int | None = None
    divergence_step: int | None = None
    message: str = ""


def replay(path: str, seed_override: int | None = None) -> ReplayResult:
    """Re-run a recorded session and compare the deterministic stream."""
    header, frames = load_recording(path)
    manifest = CouplingManifest.from_dict(header["manifest"])
    scenario_params = header.get("scenario_params") or {}
    seed = seed_override if seed_override is not None else int(header["seed"])
    recorded = [
        (m.payload.step if m.kind == "step_update" else None, m.kind, _payload_hash(m.kind, m.payload))
        for m in frames
        if m.kind in HASHED_KINDS
    ]
    if not recorded:
        return ReplayResult(ok=True, frames_compared=0, message="nothing to compare")
    # A recorder that joined mid-session missed a deterministic prefix;
    # align on the first recorded step index before comparing.
    first_step = next((s for s, _, _ in recorded if s is not None), 1)
    budget = len(recorded) + 4 * first_step + 8
    regenerated = []
    aligned = first_step <= 1
    for step, kind, payload in emission_stream(
        manifest, seed, max_frames=budget, scenario_params=scenario_params
    ):
        if not aligned:
            if kind == "step_update" and step >= first_step:
                aligned = True
            else:
                continue
        regenerated.append((step, kind, _payload_hash(kind, payload)))
        if len(regenerated) >= len(recorded):
            break
    for i, ((rec_step, rec_kind, rec_hash), regen) in enumerate(zip(recorded, regenerated)):
        regen_step, regen_kind, regen_hash = regen
        if rec_kind != regen_kind or rec_hash != regen_hash:
            return ReplayResult(
                ok=False,
                frames_compared=i,
                divergence_index=i,
                divergence_step=rec_step if rec_step is not None else regen_step,
                message=f"frame {i}: recorded {rec_kind} differs from regenerated {regen_kind}",
            )
    if len(regenerated) < len(recorded):
        return ReplayResult(
            ok=False,
            frames_compared=len(regenerated),
            divergence_index=len(regenerated),
            divergence_step=None,
            message="regeneration produced fewer frames than the recording",
        )
    return ReplayResult(ok=True, frames_compared=len(recorded))
