"""Headless protocol client: stands in for an interactive client in tests.

Runs a line-oriented script of timed directives against a live server
and reports every frame-level check. Directives:

    expect <kind> [field=value ...]      wait for the next frame of kind
    send player_state <x> <y> <z> <yaw> <pitch>
    send phase_done <name>
    invoke <action> [args...]            fresh request_id per invoke
    eval <command ...>
    assert bijection                     enable stream invariant checking
    assert entity <id> within <tol> of <x> <y> <z>
    assert value <name> <op> <literal>   op: == != < <= > >=
    assert static <species> == <count>   counts world_init features
    wait steps <n>                       until n more step_updates arrive
    wait seconds <t>

Lines starting with ``#`` are comments. Exit status is 0 only if every
check passed.
"""

from __future__ import annotations

import asyncio
import json
import shlex
from dataclasses import dataclass, field

import websockets

from .protocol import (
    ByePayload,
    ConnectPayload,
    EvalPayload,
    InvokeActionPayload,
    Message,
    PhaseDonePayload,
    PlayerStatePayload,
    ProtocolError,
    decode_message,
)
from .wire import FrameStamper

DEFAULT_TIMEOUT_S = 10.0


class ScriptError(Exception):
    """The script itself is malformed (not a failed check)."""


class TransportError(Exception):
    """Connection could not be established or died unexpectedly."""


@dataclass
class Check:
    line_no: int
    directive: str
    ok: bool
    detail: str = ""

    def to_dict(self):
        return {"line": self.line_no, "directive": self.directive, "ok": self.ok, "detail": self.detail}


@dataclass
class Report:
    ok: bool = True
    checks: list[Check] = field(default_factory=list)
    kinds_seen: dict[str, int] = field(default_factory=dict)
    kinds_sent: dict[str, int] = field(default_factory=dict)
    client_id: str | None = None

    def add(self, check: Check):
        self.checks.append(check)
        if not check.ok:
            self.ok = False

    def to_dict(self):
        return {
            "ok": self.ok,
            "client_id": self.client_id,
            "kinds_seen": self.kinds_seen,
            "kinds_sent": self.kinds_sent,
            "checks": [c.to_dict() for c in self.checks],
        }


def _literal(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text  # bare word: treat as string


_OPS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


class HeadlessClient:
    def __init__(self, uri: str, name: str = "headless", role: str = "player", timeout_s: float = DEFAULT_TIMEOUT_S):
        self.uri = uri
        self.name = name
        self.role = role
        self.timeout_s = timeout_s
        self.report = Report()
        self.stamper = FrameStamper()
        self._ws = None
        self._frames: asyncio.Queue = asyncio.Queue()
        self._closed = False
        self._request_counter = 0
        # Observed stream state.
        self.latest_entities: dict[str, dict] = {}  # id -> entity dict
        self.latest_values: dict[str, object] = {}
        self.world_init = None
        self.last_step: int | None = None
        self.steps_seen = 0
        self._check_stream = False
        self._prev_present: set[tuple[str, str]] | None = None

    # -- Frame plumbing ---------------------------------------------------------

    async def _pump(self):
        try:
            async for raw in self._ws:
                try:
                    msg = decode_message(raw)
                except ProtocolError as exc:
                    self.report.add(Check(0, "stream", False, f"undecodable frame: {exc}"))
                    continue
                await self._frames.put(msg)
        except websockets.ConnectionClosed:
            pass
        finally:
            self._closed = True
            await self._frames.put(None)

    def _observe(self, msg: Message):
        self.report.kinds_seen[msg.kind] = self.report.kinds_seen.get(msg.kind, 0) + 1
        if msg.kind == "world_init":
            self.world_init = msg.payload
        elif msg.kind == "value_update":
            self.latest_values.update(msg.payload.values)
        elif msg.kind == "step_update":
            self._observe_step(msg.payload)

    def _observe_step(self, payload):
        self.steps_seen += 1
        if self._check_stream:
            if self.last_step is not None and payload.step <= self.last_step:
                self.report.add(
                    Check(0, "stream", False, f"step not increasing: {payload.step} after {self.last_step}")
                )
            present = {(e.species, e.id) for e in payload.entities}
            if len(present) != len(payload.entities):
                self.report.add(Check(0, "stream", False, f"duplicate entity ids at step {payload.step}"))
            if self._prev_present is not None:
                expected_removed = sorted(self._prev_present - present)
                if sorted(payload.removed) != expected_removed:
                    self.report.add(
                        Check(
                            0,
                            "stream",
                            False,
                            f"step {payload.step}: removed {payload.removed} != previous-minus-current {expected_removed}",
                        )
                    )
            self._prev_present = present
        self.last_step = payload.step
        for species, ident in payload.removed:
            self.latest_entities.pop(ident, None)
        for e in payload.entities:
            self.latest_entities[e.id] = e

    async def _next_frame(self, timeout: float) -> Message | None:
        try:
            msg = await asyncio.wait_for(self._frames.get(), timeout=timeout)
        except asyncio.TimeoutError:
            return None
        if msg is not None:
            self._observe(msg)
        return msg

    def _drain_pending(self):
        while True:
            try:
                msg = self._frames.get_nowait()
            except asyncio.QueueEmpty:
                return
            if msg is not None:
                self._observe(msg)

    async def _send(self, kind: str, payload):
        self.report.kinds_sent[kind] = self.report.kinds_sent.get(kind, 0) + 1
        await self._ws.send(self.stamper.encode(kind, payload).decode("utf-8"))

    def _next_request_id(self) -> str:
        self._request_counter += 1
        return f"{self.name}-{self._request_counter}"

    # -- Directives ----------------------------------------------------------------

    async def _expect(self, line_no: int, kind: str, field_checks: list[tuple[str, object]]):
        deadline = asyncio.get_running_loop().time() + self.timeout_s
        while True:
            remaining = deadline - asyncio.get_running_loop().time()
            if remaining <= 0:
                self.report.add(Check(line_no, f"expect {kind}", False, "timeout"))
                return
            msg = await self._next_frame(remaining)
            if msg is None:
                if self._closed:
                    self.report.add(Check(line_no, f"expect {kind}", False, "connection closed"))
                    return
                continue
            if msg.kind != kind:
                continue
            payload = msg.payload.to_dict()
            for key, wanted in field_checks:
                got = payload.get(key)
                if got != wanted:
                    self.report.add(
                        Check(line_no, f"expect {kind}", False, f"{key}={got!r}, wanted {wanted!r}")
                    )
                    return
            self.report.add(Check(line_no, f"expect {kind}", True))
            return

    async def _wait_steps(self, line_no: int, n: int):
        target = self.steps_seen + n
        deadline = asyncio.get_running_loop().time() + self.timeout_s + n * 2.0
        while self.steps_seen < target:
            remaining = deadline - asyncio.get_running_loop().time()
            if remaining <= 0 or (self._closed and self._frames.empty()):
                self.report.add(
                    Check(line_no, f"wait steps {n}", False, f"saw {self.steps_seen - (target - n)} of {n}")
                )
                return
            await self._next_frame(remaining)
        self.report.add(Check(line_no, f"wait steps {n}", True))

    async def _wait_seconds(self, seconds: float):
        deadline = asyncio.get_running_loop().time() + seconds
        while True:
            remaining = deadline - asyncio.get_running_loop().time()
            if remaining <= 0:
                return
            await self._next_frame(remaining)

    def _assert_entity(self, line_no: int, ident: str, tol: float, xyz: tuple[float, float, float]):
        self._drain_pending()
        entity = self.latest_entities.get(ident)
        label = f"assert entity {ident}"
        if entity is None:
            self.report.add(Check(line_no, label, False, "not in latest snapshot"))
            return
        deltas = [abs(a - b) for a, b in zip(entity.location, xyz)]
        ok = all(d <= tol for d in deltas)
        self.report.add(Check(line_no, label, ok, "" if ok else f"location {entity.location} vs {xyz}"))

    def _assert_value(self, line_no: int, name: str, op: str, wanted):
        self._drain_pending()
        label = f"assert value {name} {op} {wanted}"
        if name not in self.latest_values:
            self.report.add(Check(line_no, label, False, "value never received"))
            return
        got = self.latest_values[name]
        try:
            ok = _OPS[op](got, wanted)
        except TypeError:
            ok = False
        self.report.add(Check(line_no, label, ok, "" if ok else f"got {got!r}"))

    def _assert_static(self, line_no: int, species: str, count: int):
        label = f"assert static {species} == {count}"
        if self.world_init is None:
            self.report.add(Check(line_no, label, False, "no world_init received"))
            return
        got = sum(1 for f in self.world_init.static_features if f.species == species)
        self.report.add(Check(line_no, label, got == count, "" if got == count else f"got {got}"))

    # -- Script execution --------------------------------------------------------------

    async def _execute(self, line_no: int, tokens: list[str]):
        head = tokens[0]
        if head == "expect":
            if len(tokens) < 2:
                raise ScriptError(f"line {line_no}: expect needs a kind")
            kind = tokens[1]
            checks = []
            for tok in tokens[2:]:
                if "=" in tok:
                    key, _, raw = tok.partition("=")
                    checks.append((key, _literal(raw)))
                elif tok in ("ok", "error"):
                    checks.append(("status", tok))
                else:
                    raise ScriptError(f"line {line_no}: bad field check {tok!r}")
            await self._expect(line_no, kind, checks)
        elif head == "send" and len(tokens) >= 2 and tokens[1] == "player_state":
            if len(tokens) != 7:
                raise ScriptError(f"line {line_no}: send player_state x y z yaw pitch")
            x, y, z, yaw, pitch = (float(t) for t in tokens[2:7])
            await self._send("player_state", PlayerStatePayload((x, y, z), yaw, pitch))
            self.report.add(Check(line_no, "send player_state", True))
        elif head == "send" and len(tokens) == 3 and tokens[1] == "phase_done":
            await self._send("phase_done", PhaseDonePayload(tokens[2]))
            self.report.add(Check(line_no, "send phase_done", True))
        elif head == "invoke":
            if len(tokens) < 2:
                raise ScriptError(f"line {line_no}: invoke needs an action")
            args = [_literal(t) for t in tokens[2:]]
            payload = InvokeActionPayload(self._next_request_id(), tokens[1], args)
            await self._send("invoke_action", payload)
            self.report.add(Check(line_no, f"invoke {tokens[1]}", True))
        elif head == "eval":
            command = " ".join(tokens[1:])
            await self._send("eval", EvalPayload(self._next_request_id(), command))
            self.report.add(Check(line_no, "eval", True))
        elif head == "assert" and len(tokens) == 2 and tokens[1] == "bijection":
            self._drain_pending()
            self._check_stream = True
            self._prev_present = None
            self.report.add(Check(line_no, "assert bijection", True, "stream checks enabled"))
        elif head == "assert" and len(tokens) == 8 and tokens[1] == "entity":
            ident, tol = tokens[2], float(tokens[4])
            xyz = (float(tokens[5]), float(tokens[6]), float(tokens[7]))
            self._assert_entity(line_no, ident, tol, xyz)
        elif head == "assert" and len(tokens) == 5 and tokens[1] == "value":
            self._assert_value(line_no, tokens[2], tokens[3], _literal(tokens[4]))
        elif head == "assert" and len(tokens) == 5 and tokens[1] == "static":
            if tokens[3] != "==":
                raise ScriptError(f"line {line_no}: assert static <species> == <count>")
            self._assert_static(line_no, tokens[2], int(tokens[4]))
        elif head == "wait" and len(tokens) == 3 and tokens[1] == "steps":
            await self._wait_steps(line_no, int(tokens[2]))
        elif head == "wait" and len(tokens) == 3 and tokens[1] == "seconds":
            await self._wait_seconds(float(tokens[2]))
        else:
            raise ScriptError(f"line {line_no}: unknown directive {' '.join(tokens)!r}")

    async def run(self, script: str) -> Report:
        try:
            self._ws = await websockets.connect(self.uri, ping_interval=5, ping_timeout=15)
        except OSError as exc:
            raise TransportError(f"cannot connect to {self.uri}: {exc}") from exc
        pump = None
        try:
            await self._send("connect", ConnectPayload(self.name, self.role))
            raw = await asyncio.wait_for(self._ws.recv(), timeout=self.timeout_s)
            first = decode_message(raw)
            self._observe(first)
            if first.kind == "reject":
                self.report.add(Check(0, "handshake", False, f"rejected: {first.payload.reason}"))
                return self.report
            if first.kind != "handshake_ack":
                raise TransportError(f"expected handshake_ack, got {first.kind}")
            self.report.client_id = first.payload.client_id
            self.report.add(Check(0, "handshake", True, f"client_id {first.payload.client_id}"))
            pump = asyncio.ensure_future(self._pump())
            for line_no, line in enumerate(script.splitlines(), start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                await self._execute(line_no, shlex.split(stripped))
                if self._closed and self._frames.empty():
                    break
            if not self._closed:
                await self._send("bye", ByePayload())
        except (websockets.ConnectionClosed, asyncio.TimeoutError) as exc:
            self.report.add(Check(0, "transport", False, f"{type(exc).__name__}: {exc}"))
        finally:
            if pump is not None:
                pump.cancel()
            try:
                await self._ws.close()
            except websockets.ConnectionClosed:
                pass
        return self.report


def run_script(
    uri: str,
    script: str,
    name: str = "headless",
    role: str = "player",
    timeout_s: float = DEFAULT_TIMEOUT_S,
) -> Report:
    """Blocking wrapper: run a script against a live server."""
    client = HeadlessClient(uri, name=name, role=role, timeout_s=timeout_s)
    return asyncio.run(client.run(script))
