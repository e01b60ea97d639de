"""Discrete-step agent simulation kernel.

A ``World`` owns a species registry, per-species agent stores, global
scalars, a named-action registry, and an inbound command queue. One
``step()`` drains the queue (FIFO), runs every species behavior in
registry-then-creation order, sweeps dead agents, runs post hooks, and
increments the step counter.

Determinism contract: identical (seed, initial world, command trace)
produces an identical state-hash sequence. Randomness is drawn from a
single world seed, split per species per step by hashing, so behavior
streams do not depend on agent counts elsewhere.
"""

from __future__ import annotations

import hashlib
import json
import pickle
import random
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable

Scalar = bool | int | float | str
Vec3 = tuple[float, float, float]

SCALAR_TYPES = ("number", "boolean", "string")


class KernelError(Exception):
    pass


class DuplicateSpecies(KernelError):
    pass


class DuplicateAction(KernelError):
    pass


class AlreadyRunning(KernelError):
    """Species must be defined before the first step."""


class UnknownSpecies(KernelError):
    pass


class UnknownAction(KernelError):
    pass


class UnknownTarget(KernelError):
    pass


class SchemaViolation(KernelError):
    """Agent attributes do not conform to the species schema."""


class ArityMismatch(KernelError):
    pass


class TypeMismatch(KernelError):
    pass


class ParseError(KernelError):
    """Command does not parse in the restricted grammar."""


class ScenarioError(KernelError):
    """A behavior or hook raised; the step was rolled back."""


def check_scalar_type(value: Any, type_name: str) -> bool:
    if type_name == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if type_name == "boolean":
        return isinstance(value, bool)
    if type_name == "string":
        return isinstance(value, str)
    raise KernelError(f"unknown scalar type {type_name!r}")


@dataclass
class SpeciesDef:
    """Blueprint for agents: attribute schema plus a behavior identifier.

    ``behavior`` names a step function registered on the world by the
    scenario (None for inert species). The function is applied to each
    alive agent every step as ``fn(world, agent, rng)``.
    """

    name: str
    attribute_schema: dict[str, str] = field(default_factory=dict)
    behavior: str | None = None


@dataclass
class Agent:
    species: str
    id: str
    location: Vec3
    heading_deg: float = 0.0
    attributes: dict[str, Scalar] = field(default_factory=dict)
    alive: bool = True


@dataclass
class ActionDef:
    """A named, typed mutation of the world, invocable by clients."""

    name: str
    arg_types: tuple[str, ...] = ()
    handler: Callable[..., Scalar | None] = None


@dataclass(frozen=True)
class Bounds:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def clamp(self, p: Vec3) -> Vec3:
        return (
            min(max(p[0], self.min_x), self.max_x),
            min(max(p[1], self.min_y), self.max_y),
            p[2] if len(p) > 2 else 0.0,
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.min_x, self.min_y, self.max_x, self.max_y)


@dataclass
class CommandResult:
    request_id: str
    source: str  # "action" | "eval"
    status: str  # "ok" | "error"
    value: Scalar | None = None
    message: str | None = None


@dataclass
class StepReport:
    step: int
    results: list[CommandResult] = field(default_factory=list)
    spawned: int = 0
    died: int = 0


@dataclass
class _QueuedCommand:
    request_id: str
    source: str  # "action" | "eval"
    op: str  # "action" | "set_global"
    name: str
    args: list[Scalar] = field(default_factory=list)


_EVAL_GET_GLOBAL = re.compile(r"^get\s+global\s+([A-Za-z_]\w*)$")
_EVAL_GET_ATTR = re.compile(r"^get\s+([A-Za-z_]\w*)\[([^\]\s]+)\]\.([A-Za-z_]\w*)$")
_EVAL_SET_GLOBAL = re.compile(r"^set\s+global\s+([A-Za-z_]\w*)\s*=\s*(.+)$")
_EVAL_CALL = re.compile(r"^call\s+([A-Za-z_]\w*)\((.*)\)$")


def _parse_literal(text: str) -> Scalar:
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        raise ParseError(f"bad literal {text!r}") from None
    if not isinstance(value, (bool, int, float, str)):
        raise ParseError(f"literal {text!r} is not a scalar")
    return value


def _parse_args(text: str) -> list[Scalar]:
    text = text.strip()
    if not text:
        return []
    try:
        values = json.loads(f"[{text}]")
    except json.JSONDecodeError:
        raise ParseError(f"bad argument list ({text!r})") from None
    for v in values:
        if not isinstance(v, (bool, int, float, str)):
            raise ParseError(f"argument {v!r} is not a scalar")
    return values


class World:
    """The simulated world; owned by a single thread of control.

    External input goes through :meth:`enqueue_action` /
    :meth:`eval_command`; nothing else should mutate the world from
    outside a behavior or action handler.
    """

    def __init__(self, rng_seed: int = 0, bounds: Bounds | None = None):
        self.bounds = bounds or Bounds(0.0, 0.0, 100.0, 100.0)
        self.step_count = 0
        self.rng_seed = int(rng_seed)
        self.running = True
        self.globals: dict[str, Scalar] = {}
        self.data: dict[str, Any] = {}  # scenario state, snapshotted with the world
        self.outbox: deque = deque()  # (kind, payload_dict) pushed by scenario code
        self._species: dict[str, SpeciesDef] = {}
        self._agents: dict[str, dict[str, Agent]] = {}
        self._counters: dict[str, int] = {}
        self._actions: dict[str, ActionDef] = {}
        self._behaviors: dict[str, Callable] = {}
        self._pre_hooks: list[tuple[str, Callable]] = []
        self._post_hooks: list[tuple[str, Callable]] = []
        self._queue: deque[_QueuedCommand] = deque()
        self._request_counter = 0

    # -- Registry ----------------------------------------------------------

    def define_species(self, spec: SpeciesDef):
        if self.step_count != 0:
            raise AlreadyRunning("species must be defined before the first step")
        if spec.name in self._species:
            raise DuplicateSpecies(spec.name)
        for attr, type_name in spec.attribute_schema.items():
            if type_name not in SCALAR_TYPES:
                raise KernelError(f"{spec.name}.{attr}: unknown type {type_name!r}")
        self._species[spec.name] = spec
        self._agents[spec.name] = {}
        self._counters[spec.name] = 0

    def species_names(self) -> list[str]:
        return list(self._species)

    def has_species(self, name: str) -> bool:
        return name in self._species

    def register_behavior(self, name: str, fn: Callable):
        self._behaviors[name] = fn

    def register_action(self, action: ActionDef):
        if action.name in self._actions:
            raise DuplicateAction(action.name)
        self._actions[action.name] = action

    def add_pre_hook(self, name: str, fn: Callable):
        self._pre_hooks.append((name, fn))

    def add_post_hook(self, name: str, fn: Callable):
        self._post_hooks.append((name, fn))

    # -- Agents ------------------------------------------------------------

    def spawn_agent(
        self,
        species: str,
        location: Vec3,
        attributes: dict[str, Scalar] | None = None,
        heading_deg: float = 0.0,
    ) -> str:
        if species not in self._species:
            raise UnknownSpecies(species)
        schema = self._species[species].attribute_schema
        attrs = dict(attributes or {})
        for name, type_name in schema.items():
            if name not in attrs:
                raise SchemaViolation(f"{species}: missing attribute {name!r}")
            if not check_scalar_type(attrs[name], type_name):
                raise SchemaViolation(
                    f"{species}.{name}: expected {type_name}, got {attrs[name]!r}"
                )
        for name in attrs:
            if name not in schema:
                raise SchemaViolation(f"{species}: attribute {name!r} not in schema")
        agent_id = f"{species}-{self._counters[species]}"
        self._counters[species] += 1
        agent = Agent(
            species=species,
            id=agent_id,
            location=self.bounds.clamp(location),
            heading_deg=float(heading_deg) % 360.0,
            attributes=attrs,
        )
        self._agents[species][agent_id] = agent
        return agent_id

    def get_agent(self, species: str, agent_id: str) -> Agent | None:
        return self._agents.get(species, {}).get(agent_id)

    def agents_of(self, species: str) -> list[Agent]:
        if species not in self._agents:
            raise UnknownSpecies(species)
        return list(self._agents[species].values())

    def all_agents(self) -> list[Agent]:
        return [a for store in self._agents.values() for a in store.values()]

    def agent_count(self) -> int:
        return sum(len(s) for s in self._agents.values())

    def kill_agent(self, species: str, agent_id: str):
        agent = self.get_agent(species, agent_id)
        if agent is None:
            raise UnknownTarget(f"{species}[{agent_id}]")
        agent.alive = False

    def remove_agent(self, species: str, agent_id: str):
        """Drop an agent immediately (outside the step's dead sweep)."""
        if self.get_agent(species, agent_id) is None:
            raise UnknownTarget(f"{species}[{agent_id}]")
        del self._agents[species][agent_id]

    def set_agent_pose(self, agent: Agent, location: Vec3, heading_deg: float | None = None):
        agent.location = self.bounds.clamp(location)
        if heading_deg is not None:
            agent.heading_deg = heading_deg % 360.0

    # -- Randomness --------------------------------------------------------

    def derived_rng(self, *parts) -> random.Random:
        key = ":".join(str(p) for p in (self.rng_seed, *parts)).encode("utf-8")
        seed = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")
        return random.Random(seed)

    def species_rng(self, species: str) -> random.Random:
        return self.derived_rng(self.step_count, species)

    # -- Commands ----------------------------------------------------------

    def _next_request_id(self) -> str:
        self._request_counter += 1
        return f"k{self._request_counter}"

    def invoke_action(self, name: str, args: list[Scalar], request_id: str | None = None) -> str:
        """Queue an action for the start of the next step.

        Validation problems (unknown action, arity, types) surface in the
        eventual result, never as exceptions, and leave state untouched.
        """
        rid = request_id or self._next_request_id()
        self._queue.append(_QueuedCommand(rid, "action", "action", name, list(args)))
        return rid

    def eval_command(
        self, command: str, request_id: str | None = None
    ) -> CommandResult | None:
        """Run one command in the restricted grammar.

        ``get``/``status``/``pause``/``resume`` execute immediately and
        return a CommandResult; ``set``/``call`` enqueue like actions and
        return None (their result arrives with the step that applies
        them). ParseError / UnknownTarget are raised; nothing is ever
        partially applied.
        """
        rid = request_id or self._next_request_id()
        cmd = command.strip()
        if cmd == "status":
            parts = [f"step={self.step_count}", f"agents={self.agent_count()}"]
            parts += [f"{name}={len(self._agents[name])}" for name in self._species]
            return CommandResult(rid, "eval", "ok", value=" ".join(parts))
        if cmd == "pause":
            self.running = False
            return CommandResult(rid, "eval", "ok", value=False)
        if cmd == "resume":
            self.running = True
            return CommandResult(rid, "eval", "ok", value=True)
        m = _EVAL_GET_GLOBAL.match(cmd)
        if m:
            name = m.group(1)
            if name not in self.globals:
                raise UnknownTarget(f"global {name}")
            return CommandResult(rid, "eval", "ok", value=self.globals[name])
        m = _EVAL_GET_ATTR.match(cmd)
        if m:
            species, agent_id, attr = m.groups()
            if species not in self._species:
                raise UnknownTarget(f"species {species}")
            agent = self.get_agent(species, agent_id)
            if agent is None:
                raise UnknownTarget(f"{species}[{agent_id}]")
            if attr not in agent.attributes:
                raise UnknownTarget(f"{species}[{agent_id}].{attr}")
            return CommandResult(rid, "eval", "ok", value=agent.attributes[attr])
        m = _EVAL_SET_GLOBAL.match(cmd)
        if m:
            name, literal = m.groups()
            value = _parse_literal(literal.strip())
            self._queue.append(_QueuedCommand(rid, "eval", "set_global", name, [value]))
            return None
        m = _EVAL_CALL.match(cmd)
        if m:
            name, arg_text = m.groups()
            args = _parse_args(arg_text)
            self._queue.append(_QueuedCommand(rid, "eval", "action", name, args))
            return None
        raise ParseError(f"cannot parse command {cmd!r}")

    def pending_commands(self) -> int:
        return len(self._queue)

    # -- Stepping ----------------------------------------------------------

    def _state_tuple(self):
        return (
            self._agents,
            self._counters,
            self.globals,
            self.data,
            self.outbox,
            self.step_count,
            self.running,
        )

    def _snapshot(self) -> bytes:
        return pickle.dumps(self._state_tuple(), protocol=pickle.HIGHEST_PROTOCOL)

    def _restore(self, blob: bytes):
        (
            self._agents,
            self._counters,
            self.globals,
            self.data,
            self.outbox,
            self.step_count,
            self.running,
        ) = pickle.loads(blob)

    def _run_command(self, cmd: _QueuedCommand) -> CommandResult:
        if cmd.op == "set_global":
            self.globals[cmd.name] = cmd.args[0]
            return CommandResult(cmd.request_id, cmd.source, "ok", value=cmd.args[0])
        action = self._actions.get(cmd.name)
        if action is None:
            return CommandResult(
                cmd.request_id, cmd.source, "error", message=f"UnknownAction: {cmd.name}"
            )
        if len(cmd.args) != len(action.arg_types):
            return CommandResult(
                cmd.request_id,
                cmd.source,
                "error",
                message=f"ArityMismatch: {cmd.name} takes {len(action.arg_types)} args",
            )
        for i, (arg, type_name) in enumerate(zip(cmd.args, action.arg_types)):
            if not check_scalar_type(arg, type_name):
                return CommandResult(
                    cmd.request_id,
                    cmd.source,
                    "error",
                    message=f"TypeMismatch: {cmd.name} arg {i} expects {type_name}",
                )
        before = self._snapshot()
        try:
            value = action.handler(self, *cmd.args)
        except KernelError as exc:
            self._restore(before)
            return CommandResult(
                cmd.request_id, cmd.source, "error",
                message=f"{type(exc).__name__}: {exc}",
            )
        except Exception as exc:  # handler bug: command is atomic, report it
            self._restore(before)
            return CommandResult(
                cmd.request_id, cmd.source, "error",
                message=f"handler failed: {type(exc).__name__}: {exc}",
            )
        return CommandResult(cmd.request_id, cmd.source, "ok", value=value)

    def step(self) -> StepReport:
        """Advance the world by exactly one step.

        Queued commands run first (arrival order), then behaviors, then
        the dead sweep and post hooks. A behavior or hook exception
        aborts the step: state is restored to the pre-step snapshot, the
        drained commands are discarded, and ScenarioError is raised.
        """
        entry_snapshot = self._snapshot()
        report = StepReport(step=self.step_count)
        agents_before = self.agent_count()
        while self._queue:
            report.results.append(self._run_command(self._queue.popleft()))
        try:
            for name, hook in self._pre_hooks:
                hook(self)
            for species_name, spec in self._species.items():
                if spec.behavior is None:
                    continue
                fn = self._behaviors.get(spec.behavior)
                if fn is None:
                    raise ScenarioError(
                        f"species {species_name} behavior {spec.behavior!r} not registered"
                    )
                rng = self.species_rng(species_name)
                for agent in list(self._agents[species_name].values()):
                    if agent.alive:
                        fn(self, agent, rng)
            died = 0
            for store in self._agents.values():
                dead = [aid for aid, a in store.items() if not a.alive]
                for aid in dead:
                    del store[aid]
                died += len(dead)
            for name, hook in self._post_hooks:
                hook(self)
        except ScenarioError:
            self._restore(entry_snapshot)
            raise
        except Exception as exc:
            self._restore(entry_snapshot)
            raise ScenarioError(f"{type(exc).__name__}: {exc}") from exc
        report.spawned = max(0, self.agent_count() + died - agents_before)
        report.died = died
        self.step_count += 1
        report.step = self.step_count
        return report

    # -- Hashing -----------------------------------------------------------

    def state_hash(self) -> str:
        """Deterministic digest of step counter, agents, and globals."""
        doc = {
            "step": self.step_count,
            "agents": {
                species: [
                    {
                        "id": a.id,
                        "location": list(a.location),
                        "heading_deg": a.heading_deg,
                        "attributes": {k: a.attributes[k] for k in sorted(a.attributes)},
                        "alive": a.alive,
                    }
                    for a in store.values()
                ]
                for species, store in self._agents.items()
            },
            "globals": {k: self.globals[k] for k in sorted(self.globals)},
        }
        text = json.dumps(doc, separators=(",", ":"), sort_keys=False, allow_nan=False)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()
