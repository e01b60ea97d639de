"""Simulation server: runs one world and serves its clients.

Two operating modes share all coupling logic:

* direct      - this process listens for websocket clients itself and
                admits at most one player (observers unlimited)
* broker-sim  - this process dials out to a broker's simulation port and
                serves every client through routing envelopes

The world advances on a wall-clock tick (one step per step_period_ms,
no catch-up bursts). All inbound traffic is queued and applied at tick
boundaries; outbound snapshots and value updates are built once per
completed step by the linker.
"""

from __future__ import annotations

import asyncio
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any

import websockets

from .kernel import KernelError, ParseError as CommandParseError, UnknownTarget, World
from .linker import Linker, SessionFull, StaleBinding
from .manifest import CouplingManifest
from .protocol import (
    ActionResultPayload,
    ByePayload,
    ConnectPayload,
    DebugPayload,
    EvalResultPayload,
    HandshakeAckPayload,
    Message,
    PAYLOAD_TYPES,
    PROTOCOL_VERSION,
    PhasePayload,
    ProtocolError,
    MalformedFrame,
    RejectPayload,
    ValueUpdatePayload,
    decode_message,
    validate_handshake,
)
from .scenarios import get_scenario
from .wire import BROKER_ID, BoundedOutbox, FrameStamper, SeqChecker, decode_envelope, encode_envelope

log = logging.getLogger(__name__)

DEFAULT_DIRECT_PORT = 8000


@dataclass
class _Client:
    client_id: str
    name: str
    role: str
    stamper: FrameStamper = field(default_factory=FrameStamper)
    outbox: BoundedOutbox | None = None  # direct mode only
    seq_in: SeqChecker = field(default_factory=SeqChecker)
    active: bool = True  # handshake done, world_init may still be pending
    drop_notice_pending: bool = False


class SimServer:
    """One world, one linker, many clients."""

    def __init__(
        self,
        manifest: CouplingManifest,
        seed: int = 0,
        mode: str = "direct",
        host: str = "127.0.0.1",
        port: int = DEFAULT_DIRECT_PORT,
        broker_host: str = "127.0.0.1",
        broker_sim_port: int = 8081,
        step_limit: int | None = None,
        disconnect_grace_s: float = 10.0,
        scenario_params: dict[str, Any] | None = None,
        max_queue: int = 64,
    ):
        if mode not in ("direct", "broker-sim"):
            raise ValueError(f"unknown mode {mode!r}")
        self.manifest = manifest
        self.mode = mode
        self.host = host
        self.port = port
        self.broker_host = broker_host
        self.broker_sim_port = broker_sim_port
        self.step_limit = step_limit
        self.seed = seed

        self.scenario = get_scenario(manifest.scenario)
        self.world = World(rng_seed=seed)
        self.scenario.install(
            self.world, step_period_ms=manifest.step_period_ms, **(scenario_params or {})
        )
        self.linker = Linker(self.world, manifest, self.scenario, disconnect_grace_s)

        self.max_players = 1 if mode == "direct" else manifest.max_players
        self.min_players = min(manifest.min_players, self.max_players)
        self.gate_started = False

        self.max_queue = max_queue
        self.clients: dict[str, _Client] = {}
        self._sockets: dict[str, Any] = {}  # direct mode: client_id -> websocket
        self._inbound: deque = deque()  # ("connect"|"disconnect"|"frame", client_id, ...)
        self._pending_connects: deque = deque()
        self._request_origin: dict[str, str] = {}
        self._client_counter = 0
        self._stopping = asyncio.Event()
        self._uplink = None
        self._uplink_stamper = FrameStamper()
        self._ws_server = None
        self._tasks: list[asyncio.Task] = []
        self.drop_count = 0
        self.steps_done = 0

    # -- Outbound ----------------------------------------------------------------

    def _send(self, client: _Client, kind: str, payload):
        if not client.active:
            return
        if self.mode == "direct":
            frame = client.stamper.encode(kind, payload)
            dropped = client.outbox.push(kind, frame)
            if dropped:
                self.drop_count += 1
                if not client.drop_notice_pending:
                    client.drop_notice_pending = True
                    notice = client.stamper.encode(
                        "debug",
                        DebugPayload("warn", f"backpressure: dropped one {dropped} frame"),
                    )
                    client.outbox.push("debug", notice)
        else:
            self._uplink_send(client.client_id, kind, payload)

    def _broadcast(self, kind: str, payload):
        if self.mode == "direct":
            for client in list(self.clients.values()):
                self._send(client, kind, payload)
        else:
            self._uplink_send(None, kind, payload)

    def _uplink_send(self, client_id: str | None, kind: str, payload):
        if self._uplink is None:
            return
        msg = Message(kind=kind, seq=0, payload=payload)  # broker re-stamps per client
        frame = encode_envelope(self._uplink_stamper.next_seq(), client_id, msg)
        task = asyncio.ensure_future(self._uplink.send(frame))
        task.add_done_callback(lambda t: t.cancelled() or t.exception())

    # -- Inbound event processing ---------------------------------------------------

    def _handle_frame(self, client_id: str, msg: Message):
        client = self.clients.get(client_id)
        if client is None:
            return
        kind = msg.kind
        if kind == "player_state":
            try:
                self.linker.apply_player_state(client_id, msg.payload)
            except StaleBinding:
                self._send(client, "debug", DebugPayload("warn", "player_state dropped: no live binding"))
        elif kind == "invoke_action":
            self._request_origin[msg.payload.request_id] = client_id
            self.world.invoke_action(msg.payload.action, msg.payload.args, msg.payload.request_id)
        elif kind == "eval":
            rid = msg.payload.request_id
            try:
                result = self.world.eval_command(msg.payload.command, rid)
            except (CommandParseError, UnknownTarget, KernelError) as exc:
                self._send(
                    client,
                    "eval_result",
                    EvalResultPayload(rid, "error", message=f"{type(exc).__name__}: {exc}"),
                )
                return
            if result is None:
                self._request_origin[rid] = client_id  # applied at the next step
            else:
                self._send(
                    client,
                    "eval_result",
                    EvalResultPayload(rid, result.status, result.value, result.message),
                )
        elif kind == "phase_done":
            self.scenario.on_phase_done(self.world, msg.payload.name)
        elif kind == "bye":
            self._disconnect(client_id, notify=False)
        else:
            self._send(client, "debug", DebugPayload("warn", f"unexpected {kind} frame ignored"))

    def _process_connect(self, client_id: str):
        client = self.clients.get(client_id)
        if client is None:
            return
        try:
            init = self.linker.on_client_connect(client_id, client.name, client.role)
        except SessionFull:
            self._send(client, "reject", RejectPayload("session_full"))
            self._disconnect(client_id, notify=False)
            return
        self._send(client, "world_init", init)
        self._broadcast("debug", DebugPayload("info", f"{client.role} {client.name} joined"))
        log.info("client %s (%s, %s) joined", client_id, client.name, client.role)

    def _disconnect(self, client_id: str, notify: bool = True):
        client = self.clients.pop(client_id, None)
        if client is None:
            return
        client.active = False
        self.linker.on_client_disconnect(client_id)
        if self.mode == "direct":
            ws = self._sockets.pop(client_id, None)
            if client.outbox:
                client.outbox.close()
            if ws is not None:
                task = asyncio.ensure_future(ws.close())
                task.add_done_callback(lambda t: t.exception())
        log.info("client %s left", client_id)

    def _drain_inbound(self):
        if self.gate_started:
            while self._pending_connects:
                self._process_connect(self._pending_connects.popleft())
        while self._inbound:
            event = self._inbound.popleft()
            if event[0] == "connect":
                if self.gate_started:
                    self._process_connect(event[1])
                else:
                    self._pending_connects.append(event[1])
            elif event[0] == "disconnect":
                self._disconnect(event[1], notify=False)
            elif event[0] == "frame":
                self._handle_frame(event[1], event[2])

    def _eval_gate(self):
        if self.gate_started or self.mode != "direct":
            return
        players = sum(1 for c in self.clients.values() if c.role == "player")
        if players >= self.min_players:
            self.gate_started = True
            log.info("gate started with %d player(s)", players)

    def _dispatch_results(self, results):
        for r in results:
            origin = self._request_origin.pop(r.request_id, None)
            if origin == BROKER_ID:
                payload = EvalResultPayload(r.request_id, r.status, r.value, r.message)
                self._uplink_send(BROKER_ID, "eval_result", payload)
                continue
            client = self.clients.get(origin) if origin else None
            if client is None:
                continue
            if r.source == "action":
                payload = ActionResultPayload(r.request_id, r.status, r.value, r.message)
                self._send(client, "action_result", payload)
            else:
                payload = EvalResultPayload(r.request_id, r.status, r.value, r.message)
                self._send(client, "eval_result", payload)

    def _drain_outbox(self):
        while self.world.outbox:
            kind, payload_dict = self.world.outbox.popleft()
            payload = PAYLOAD_TYPES[kind].from_dict(payload_dict, kind)
            self._broadcast(kind, payload)

    # -- Tick loop ------------------------------------------------------------------

    async def _tick_loop(self):
        period = self.manifest.step_period_ms / 1000.0
        loop = asyncio.get_running_loop()
        next_t = loop.time() + period
        last_rate_log = (time.monotonic(), 0)
        while not self._stopping.is_set():
            self._eval_gate()
            self._drain_inbound()
            if self.gate_started and self.world.running:
                try:
                    report = self.world.step()
                except KernelError as exc:
                    log.error("step aborted: %s", exc)
                    self._broadcast("debug", DebugPayload("error", f"step aborted: {exc}"))
                else:
                    self.steps_done += 1
                    self._dispatch_results(report.results)
                    self.linker.tick()
                    step_p, value_p = self.linker.build_step_update()
                    if step_p is not None:
                        self._broadcast("step_update", step_p)
                    if value_p is not None:
                        self._broadcast("value_update", value_p)
            self._drain_outbox()
            if self.step_limit is not None and self.steps_done >= self.step_limit:
                log.info("step limit %d reached", self.step_limit)
                break
            now_wall, steps_then = last_rate_log
            if time.monotonic() - now_wall >= 10.0:
                rate = (self.steps_done - steps_then) / (time.monotonic() - now_wall)
                log.info("step %d (%.1f steps/s, %d client(s))", self.steps_done, rate, len(self.clients))
                last_rate_log = (time.monotonic(), self.steps_done)
            now = loop.time()
            next_t = max(now, next_t + period)
            try:
                await asyncio.wait_for(self._stopping.wait(), timeout=next_t - now)
            except asyncio.TimeoutError:
                pass
        await self._shutdown()

    async def _shutdown(self):
        self._stopping.set()
        bye = ByePayload()
        if self.mode == "direct":
            for client in list(self.clients.values()):
                self._send(client, "bye", bye)
            loop = asyncio.get_running_loop()
            deadline = loop.time() + 0.5
            while loop.time() < deadline and any(
                c.outbox and len(c.outbox) for c in self.clients.values()
            ):
                await asyncio.sleep(0.01)
            for client_id in list(self.clients):
                self._disconnect(client_id, notify=False)
            if self._ws_server is not None:
                self._ws_server.close()
                await self._ws_server.wait_closed()
        else:
            self._uplink_send(None, "bye", bye)
            await asyncio.sleep(0.05)
            if self._uplink is not None:
                await self._uplink.close()

    # -- Direct mode: websocket listener ------------------------------------------------

    async def _client_sender(self, client: _Client, ws):
        try:
            while True:
                frame = await client.outbox.get()
                if frame is None:
                    return
                client.drop_notice_pending = False
                await ws.send(frame)
        except websockets.ConnectionClosed:
            pass

    async def _on_client(self, ws):
        client_id = None
        try:
            raw = await asyncio.wait_for(ws.recv(), timeout=10.0)
            try:
                msg = decode_message(raw)
            except ProtocolError as exc:
                log.warning("handshake failed: %s", exc)
                await ws.close()
                return
            if msg.kind != "connect":
                await ws.close()
                return
            players = sum(1 for c in self.clients.values() if c.role == "player")
            decision = validate_handshake(
                msg, PROTOCOL_VERSION, has_capacity=players < self.max_players
            )
            stamper = FrameStamper()
            if not decision.accepted:
                reject = stamper.encode("reject", RejectPayload(decision.reason))
                await ws.send(reject)
                await ws.close()
                return
            self._client_counter += 1
            client_id = f"c{self._client_counter - 1}"
            client = _Client(
                client_id,
                msg.payload.client_name,
                msg.payload.desired_role,
                stamper=stamper,
                outbox=BoundedOutbox(self.max_queue),
            )
            self.clients[client_id] = client
            self._sockets[client_id] = ws
            sender = asyncio.ensure_future(self._client_sender(client, ws))
            self._send(client, "handshake_ack", HandshakeAckPayload(client_id))
            will_start = (
                self.gate_started
                or sum(1 for c in self.clients.values() if c.role == "player") >= self.min_players
            )
            if not will_start:
                self._send(client, "phase", PhasePayload("lobby"))
            self._inbound.append(("connect", client_id))
            async for raw in ws:
                try:
                    inbound = decode_message(raw)
                except MalformedFrame as exc:
                    log.warning("closing %s: %s", client_id, exc)
                    break
                except ProtocolError as exc:
                    self._send(client, "debug", DebugPayload("warn", str(exc)))
                    continue
                if not client.seq_in.admit(inbound.seq):
                    self._send(client, "debug", DebugPayload("warn", "non-monotone seq dropped"))
                    continue
                self._inbound.append(("frame", client_id, inbound))
            sender.cancel()
        except (websockets.ConnectionClosed, asyncio.TimeoutError):
            pass
        finally:
            if client_id is not None and client_id in self.clients:
                self._inbound.append(("disconnect", client_id))

    # -- Broker mode: uplink -----------------------------------------------------------

    async def _connect_uplink(self):
        uri = f"ws://{self.broker_host}:{self.broker_sim_port}"
        try:
            self._uplink = await websockets.connect(uri, ping_interval=5, ping_timeout=15)
            await self._uplink.send(
                self._uplink_stamper.encode(
                    "connect", ConnectPayload(client_name="simulation", desired_role="observer")
                )
            )
            ack = decode_message(await asyncio.wait_for(self._uplink.recv(), timeout=10.0))
        except (OSError, asyncio.TimeoutError, websockets.ConnectionClosed) as exc:
            raise BrokerUnreachable(f"broker unreachable at {uri}: {exc}") from exc
        if ack.kind != "handshake_ack":
            raise BrokerUnreachable(f"broker refused simulation link: {ack.kind}")
        summary = {
            "min_players": self.manifest.min_players,
            "max_players": self.manifest.max_players,
            "scenario": self.manifest.scenario,
            "step_period_ms": self.manifest.step_period_ms,
        }
        self._uplink_send(BROKER_ID, "value_update", ValueUpdatePayload(summary))

    async def _read_uplink(self):
        try:
            async for raw in self._uplink:
                try:
                    client_id, msg = decode_envelope(raw)
                except ProtocolError as exc:
                    log.warning("bad envelope from broker: %s", exc)
                    continue
                self._dispatch_envelope(client_id, msg)
        except websockets.ConnectionClosed:
            log.warning("broker link closed")
        finally:
            self._stopping.set()

    def _dispatch_envelope(self, client_id: str | None, msg: Message):
        if client_id == BROKER_ID:
            if msg.kind == "eval":
                rid = msg.payload.request_id
                try:
                    result = self.world.eval_command(msg.payload.command, rid)
                except KernelError as exc:
                    payload = EvalResultPayload(rid, "error", message=str(exc))
                    self._uplink_send(BROKER_ID, "eval_result", payload)
                    return
                self.gate_started = True  # broker owns gating
                if result is not None:
                    payload = EvalResultPayload(rid, result.status, result.value, result.message)
                    self._uplink_send(BROKER_ID, "eval_result", payload)
            return
        if client_id is None:
            return
        if msg.kind == "connect":
            if client_id not in self.clients:
                self.clients[client_id] = _Client(
                    client_id, msg.payload.client_name, msg.payload.desired_role
                )
                self._inbound.append(("connect", client_id))
        elif msg.kind == "bye":
            self._inbound.append(("disconnect", client_id))
        else:
            self._inbound.append(("frame", client_id, msg))

    # -- Entry points -------------------------------------------------------------------

    async def run(self):
        """Serve until stopped (or until step_limit steps have run)."""
        if self.mode == "direct":
            self._ws_server = await websockets.serve(
                self._on_client, self.host, self.port, ping_interval=5, ping_timeout=15
            )
            log.info("direct mode: listening on ws://%s:%d", self.host, self.port)
        else:
            await self._connect_uplink()
            self._tasks.append(asyncio.ensure_future(self._read_uplink()))
            log.info("broker-sim mode: linked to %s:%d", self.broker_host, self.broker_sim_port)
        try:
            await self._tick_loop()
        finally:
            for task in self._tasks:
                task.cancel()

    def stop(self):
        self._stopping.set()


class BrokerUnreachable(Exception):
    """Could not reach or handshake with the broker's simulation port."""
