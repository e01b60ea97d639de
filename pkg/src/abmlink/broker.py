"""Session broker: multiplexes many clients onto one simulation.

The broker owns handshakes and the start gate. Clients connect on one
port and the simulation dials in on another; both links speak the same
wire protocol, with routing envelopes on the simulation side. Client
connects are held in a lobby until the simulation is linked and the
player count reaches the session minimum; the broker then flushes the
queued connects and starts the simulation with a ``resume`` command.

After linking, the simulation reports its session summary (player
limits, scenario, step period) in a value_update addressed to the
broker; the gate uses those numbers.

A small HTTP endpoint (GET /status, GET /clients) exposes read-only
session state for monitoring.
"""

from __future__ import annotations

import asyncio
import json
import logging
import time
from dataclasses import dataclass, field

import websockets

from .protocol import (
    ByePayload,
    DebugPayload,
    EvalPayload,
    Message,
    PROTOCOL_VERSION,
    PhasePayload,
    ProtocolError,
    MalformedFrame,
    RejectPayload,
    HandshakeAckPayload,
    decode_message,
    encode_message,
    validate_handshake,
)
from .wire import BROKER_ID, BoundedOutbox, FrameStamper, SeqChecker, decode_envelope, encode_envelope

log = logging.getLogger(__name__)

DEFAULT_CLIENT_PORT = 8080
DEFAULT_SIM_PORT = 8081
DEFAULT_HTTP_PORT = 8082
DEFAULT_GRACE_S = 10.0


@dataclass
class BrokerClient:
    client_id: str
    client_name: str
    role: str
    connected_at: float
    last_seen: float
    connected: bool = True
    seq_in_count: int = 0
    stamper: FrameStamper = field(default_factory=FrameStamper)
    outbox: BoundedOutbox | None = None
    seq_check: SeqChecker = field(default_factory=SeqChecker)
    drop_notice_pending: bool = False

    def report(self) -> dict:
        return {
            "client_id": self.client_id,
            "client_name": self.client_name,
            "role": self.role,
            "connected": self.connected,
            "connected_at": self.connected_at,
            "last_seen": self.last_seen,
            "seq_in": self.seq_in_count,
            "seq_out": self.stamper._next,
        }


class Broker:
    def __init__(
        self,
        host: str = "127.0.0.1",
        client_port: int = DEFAULT_CLIENT_PORT,
        sim_port: int = DEFAULT_SIM_PORT,
        http_port: int = DEFAULT_HTTP_PORT,
        max_queue: int = 64,
        grace_s: float = DEFAULT_GRACE_S,
    ):
        self.host = host
        self.client_port = client_port
        self.sim_port = sim_port
        self.http_port = http_port
        self.max_queue = max_queue
        self.grace_s = grace_s

        self.sim_ws = None
        self.sim_stamper = FrameStamper()
        self.manifest_summary: dict | None = None
        self.gate = "waiting"
        self.clients: dict[str, BrokerClient] = {}
        self._pending_connects: list[tuple[str, Message]] = []
        self._client_counter = 0
        self._gate_request = 0
        self.drop_count = 0
        self._servers = []
        self._stopping = asyncio.Event()

    # -- Gate ---------------------------------------------------------------------

    def _player_count(self) -> int:
        return sum(1 for c in self.clients.values() if c.connected and c.role == "player")

    def _max_players(self) -> int | None:
        if self.manifest_summary is None:
            return None
        return int(self.manifest_summary["max_players"])

    def _eval_gate(self):
        if self.gate == "started" or self.sim_ws is None or self.manifest_summary is None:
            return
        if self._player_count() >= int(self.manifest_summary["min_players"]):
            self.gate = "started"
            log.info("gate started with %d player(s)", self._player_count())
            for client_id, connect in self._pending_connects:
                self._to_sim(client_id, connect)
            self._pending_connects.clear()
            self._gate_request += 1
            self._to_sim(
                BROKER_ID,
                Message("eval", 0, EvalPayload(f"gate-{self._gate_request}", "resume")),
            )

    # -- Frame movement -------------------------------------------------------------

    def _to_sim(self, client_id: str | None, msg: Message):
        if self.sim_ws is None:
            return
        frame = encode_envelope(self.sim_stamper.next_seq(), client_id, msg)
        task = asyncio.ensure_future(self.sim_ws.send(frame))
        task.add_done_callback(lambda t: t.cancelled() or t.exception())

    def _deliver(self, client: BrokerClient, msg: Message):
        if not client.connected or client.outbox is None:
            return
        stamped = client.stamper.stamp(msg.kind, msg.payload)
        frame = encode_message(stamped)
        dropped = client.outbox.push(msg.kind, frame)
        if dropped:
            self.drop_count += 1
            if not client.drop_notice_pending:
                client.drop_notice_pending = True
                notice = client.stamper.stamp(
                    "debug", DebugPayload("warn", f"backpressure: dropped one {dropped} frame")
                )
                client.outbox.push("debug", encode_message(notice))

    def _broadcast(self, msg: Message):
        for client in self.clients.values():
            self._deliver(client, msg)

    # -- Simulation link --------------------------------------------------------------

    async def _on_sim(self, ws):
        if self.sim_ws is not None:
            await ws.close(1013, "simulation already connected")
            return
        try:
            raw = await asyncio.wait_for(ws.recv(), timeout=10.0)
            msg = decode_message(raw)
            if msg.kind != "connect":
                await ws.close()
                return
        except (ProtocolError, asyncio.TimeoutError, websockets.ConnectionClosed):
            await ws.close()
            return
        self.sim_ws = ws
        self.sim_stamper = FrameStamper()
        ack = self.sim_stamper.stamp("handshake_ack", HandshakeAckPayload("_sim"))
        await ws.send(encode_message(ack))
        log.info("simulation linked")
        try:
            async for raw in ws:
                try:
                    client_id, inner = decode_envelope(raw)
                except ProtocolError as exc:
                    log.warning("bad frame from simulation: %s", exc)
                    continue
                self._on_sim_frame(client_id, inner)
        except websockets.ConnectionClosed:
            pass
        finally:
            self.sim_ws = None
            log.info("simulation link closed")

    def _on_sim_frame(self, client_id: str | None, msg: Message):
        if client_id == BROKER_ID:
            if msg.kind == "value_update" and self.manifest_summary is None:
                values = msg.payload.values
                if {"min_players", "max_players", "scenario"} <= set(values):
                    self.manifest_summary = {
                        "min_players": int(values["min_players"]),
                        "max_players": int(values["max_players"]),
                        "scenario": values["scenario"],
                    }
                    log.info("session summary: %s", self.manifest_summary)
                    self._eval_gate()
            return
        if client_id is None:
            self._broadcast(msg)
            return
        client = self.clients.get(client_id)
        if client is None:
            log.debug("frame for vanished client %s dropped", client_id)
            return
        self._deliver(client, msg)

    # -- Client connections --------------------------------------------------------------

    async def _client_sender(self, client: BrokerClient, ws):
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
        client: BrokerClient | None = None
        try:
            raw = await asyncio.wait_for(ws.recv(), timeout=10.0)
            try:
                connect = decode_message(raw)
            except ProtocolError as exc:
                log.warning("client handshake failed: %s", exc)
                return
            if connect.kind != "connect":
                return
            maximum = self._max_players()
            has_capacity = maximum is None or self._player_count() < maximum
            decision = validate_handshake(connect, PROTOCOL_VERSION, has_capacity=has_capacity)
            stamper = FrameStamper()
            if not decision.accepted:
                await ws.send(encode_message(stamper.stamp("reject", RejectPayload(decision.reason))))
                return
            self._client_counter += 1
            client_id = f"c{self._client_counter - 1}"
            now = time.time()
            client = BrokerClient(
                client_id,
                connect.payload.client_name,
                connect.payload.desired_role,
                connected_at=now,
                last_seen=now,
                stamper=stamper,
                outbox=BoundedOutbox(self.max_queue),
            )
            self.clients[client_id] = client
            sender = asyncio.ensure_future(self._client_sender(client, ws))
            self._deliver(client, Message("handshake_ack", 0, HandshakeAckPayload(client_id)))
            if self.gate == "started":
                self._to_sim(client_id, connect)
            else:
                self._pending_connects.append((client_id, connect))
                self._eval_gate()
                if self.gate == "waiting":
                    self._deliver(client, Message("phase", 0, PhasePayload("lobby")))
            async for raw in ws:
                try:
                    inbound = decode_message(raw)
                except MalformedFrame as exc:
                    log.warning("closing %s: %s", client.client_id, exc)
                    break
                except ProtocolError as exc:
                    self._deliver(client, Message("debug", 0, DebugPayload("warn", str(exc))))
                    continue
                client.last_seen = time.time()
                client.seq_in_count += 1
                if not client.seq_check.admit(inbound.seq):
                    self._deliver(
                        client, Message("debug", 0, DebugPayload("warn", "non-monotone seq dropped"))
                    )
                    continue
                if inbound.kind == "bye":
                    break
                self._to_sim(client.client_id, inbound)
            sender.cancel()
        except (asyncio.TimeoutError, websockets.ConnectionClosed):
            pass
        finally:
            if client is not None:
                self._on_client_gone(client)
            try:
                await ws.close()
            except websockets.ConnectionClosed:
                pass

    def _on_client_gone(self, client: BrokerClient):
        if not client.connected:
            return
        client.connected = False
        client.last_seen = time.time()
        client.outbox.close()
        self._pending_connects = [(cid, m) for cid, m in self._pending_connects if cid != client.client_id]
        # The simulation sees the disconnect as a synthesized bye.
        if self.gate == "started":
            self._to_sim(client.client_id, Message("bye", 0, ByePayload()))
        loop = asyncio.get_running_loop()
        loop.call_later(self.grace_s, self._forget_client, client.client_id)
        log.info("client %s (%s) disconnected", client.client_id, client.client_name)

    def _forget_client(self, client_id: str):
        client = self.clients.get(client_id)
        if client is not None and not client.connected:
            del self.clients[client_id]

    # -- Monitoring HTTP -------------------------------------------------------------

    def status(self) -> dict:
        return {
            "sim_connected": self.sim_ws is not None,
            "gate": self.gate,
            "manifest_summary": self.manifest_summary,
            "clients": [c.report() for c in self.clients.values()],
        }

    async def _on_http(self, reader, writer):
        try:
            request = await asyncio.wait_for(reader.readline(), timeout=5.0)
            while True:
                line = await asyncio.wait_for(reader.readline(), timeout=5.0)
                if line in (b"\r\n", b"\n", b""):
                    break
            parts = request.decode("latin-1").split()
            path = parts[1] if len(parts) >= 2 else "/"
            if parts and parts[0] == "GET" and path == "/status":
                body, code = json.dumps(self.status()).encode(), b"200 OK"
            elif parts and parts[0] == "GET" and path == "/clients":
                body, code = json.dumps(self.status()["clients"]).encode(), b"200 OK"
            else:
                body, code = b'{"error":"not found"}', b"404 Not Found"
            writer.write(
                b"HTTP/1.1 " + code + b"\r\nContent-Type: application/json\r\n"
                b"Content-Length: " + str(len(body)).encode() + b"\r\nConnection: close\r\n\r\n" + body
            )
            await writer.drain()
        except (asyncio.TimeoutError, ConnectionError):
            pass
        finally:
            writer.close()

    # -- Lifecycle ---------------------------------------------------------------------

    async def start(self):
        self._servers = [
            await websockets.serve(
                self._on_client, self.host, self.client_port, ping_interval=5, ping_timeout=15
            ),
            await websockets.serve(
                self._on_sim, self.host, self.sim_port, ping_interval=5, ping_timeout=15
            ),
            await asyncio.start_server(self._on_http, self.host, self.http_port),
        ]
        log.info(
            "broker up: clients :%d, simulation :%d, http :%d",
            self.client_port,
            self.sim_port,
            self.http_port,
        )

    async def run(self):
        await self.start()
        await self._stopping.wait()
        await self.close()

    def stop(self):
        self._stopping.set()

    async def close(self):
        for srv in self._servers:
            srv.close()
            if hasattr(srv, "wait_closed"):
                await srv.wait_closed()
