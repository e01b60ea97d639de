"""Linker: binds connected clients to the simulated world.

Owns the coupling manifest at runtime. Creates and retires player
agents on connect/disconnect, materializes world_init for each client,
applies inbound player poses, and builds the per-step outbound payloads
according to the coupling mode:

* bijection   - every alive agent of every per_step species is snapshotted
* projection  - only agents passing their species' named filter predicate
* background  - no simulation species is snapshotted; global value
  channels are pushed every step (player agents, when present, still
  echo through snapshots so observers can follow them)
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass
from typing import Callable

from .geometry import EntitySnapshot, GeometryFeature, from_client_point, yaw_to_heading
from .kernel import World
from .manifest import CouplingManifest, SpeciesSyncSpec
from .protocol import (
    PlayerStatePayload,
    StepUpdatePayload,
    ValueUpdatePayload,
    WorldInitPayload,
)


class SessionFull(Exception):
    """Player slots are exhausted; surfaces as a handshake reject."""


class StaleBinding(Exception):
    """Player state arrived for a disconnected binding; frame is dropped."""


DEFAULT_DISCONNECT_GRACE_S = 10.0


@dataclass
class PlayerAgentBinding:
    client_id: str
    client_name: str
    agent_id: str
    connected: bool = True
    last_state: PlayerStatePayload | None = None
    disconnected_at_step: int | None = None


# -- Projection filter library ----------------------------------------------

_FILTER_RE = re.compile(r"^([a-z_]\w*)\((.*)\)$")


def _within_radius(radius: float):
    def predicate(linker: "Linker", agent) -> bool:
        for binding in linker.bindings.values():
            player = linker.world.get_agent(linker.manifest.player_species, binding.agent_id)
            if player is None or not player.alive:
                continue
            dx = agent.location[0] - player.location[0]
            dy = agent.location[1] - player.location[1]
            if math.hypot(dx, dy) <= radius:
                return True
        return False

    return predicate


def _attribute_true(name: str):
    def predicate(linker: "Linker", agent) -> bool:
        return agent.attributes.get(name) is True

    return predicate


def parse_filter(text: str) -> Callable:
    """Resolve a named predicate like ``within_radius(100)``.

    Known predicates: ``within_radius(r)`` keeps agents within r meters
    of any connected player; ``attribute_true(name)`` keeps agents whose
    named attribute is true.
    """
    m = _FILTER_RE.match(text.strip())
    if not m:
        raise ValueError(f"bad filter syntax {text!r}")
    name, arg = m.group(1), m.group(2).strip()
    if name == "within_radius":
        try:
            radius = float(arg)
        except ValueError:
            raise ValueError(f"within_radius expects a number, got {arg!r}") from None
        if radius < 0:
            raise ValueError("within_radius expects a non-negative radius")
        return _within_radius(radius)
    if name == "attribute_true":
        attr = arg.strip("\"'")
        if not attr:
            raise ValueError("attribute_true expects an attribute name")
        return _attribute_true(attr)
    raise ValueError(f"unknown filter {name!r}")


def implicit_player_spec(species: str) -> SpeciesSyncSpec:
    # Player poses are always mirrored so observers can follow them.
    return SpeciesSyncSpec(
        species=species,
        mode="per_step",
        dims="3d",
        color=(255, 210, 0),
        tag="player",
        has_collider=True,
        interactable=False,
        synced_attributes=["pitch_deg"],
    )


class Linker:
    """Runtime coupling between one world and its connected clients."""

    def __init__(
        self,
        world: World,
        manifest: CouplingManifest,
        scenario,
        disconnect_grace_s: float = DEFAULT_DISCONNECT_GRACE_S,
    ):
        self.world = world
        self.manifest = manifest
        self.scenario = scenario
        self.bindings: dict[str, PlayerAgentBinding] = {}  # client_id -> binding
        self._by_name: dict[str, PlayerAgentBinding] = {}
        self.grace_steps = max(1, round(disconnect_grace_s * 1000.0 / manifest.step_period_ms))
        self._prev_emitted: set[tuple[str, str]] = set()
        self._last_values: dict[str, object] | None = None
        self._filters: dict[str, Callable] = {}
        self._sync_specs = self._effective_specs()

    def _effective_specs(self) -> list[SpeciesSyncSpec]:
        specs = list(self.manifest.species_specs)
        player = self.manifest.player_species
        if not any(s.species == player and s.mode == "per_step" for s in specs):
            specs.append(implicit_player_spec(player))
        for spec in specs:
            if spec.filter:
                self._filters[spec.species] = parse_filter(spec.filter)
        return specs

    def per_step_specs(self) -> list[SpeciesSyncSpec]:
        if self.manifest.coupling_mode == "background":
            # Only the player species echoes; simulation species stay silent.
            return [
                s
                for s in self._sync_specs
                if s.mode == "per_step" and s.species == self.manifest.player_species
            ]
        return [s for s in self._sync_specs if s.mode == "per_step"]

    def player_count(self) -> int:
        return sum(1 for b in self.bindings.values() if b.connected)

    # -- Connection lifecycle ------------------------------------------------

    def on_client_connect(self, client_id: str, client_name: str, role: str) -> WorldInitPayload:
        """Admit a client and build its world_init.

        Players get an agent (revived if the same client_name disconnected
        within the grace window) and their assigned player_id; observers
        get the same scene without one.
        """
        player_id = None
        if role == "player":
            if self.player_count() >= self.manifest.max_players:
                raise SessionFull(f"{self.manifest.max_players} players already connected")
            existing = self._by_name.get(client_name)
            if existing is not None and not existing.connected:
                # Revival: same name within grace keeps the same agent.
                del self.bindings[existing.client_id]
                existing.client_id = client_id
                existing.connected = True
                existing.disconnected_at_step = None
                self.bindings[client_id] = existing
                player_id = existing.agent_id
            else:
                agent_id = self.world.spawn_agent(
                    self.manifest.player_species,
                    self.scenario.spawn_point(self.world),
                    {"pitch_deg": 0.0},
                )
                binding = PlayerAgentBinding(client_id, client_name, agent_id)
                self.bindings[client_id] = binding
                self._by_name[client_name] = binding
                player_id = agent_id
            if hasattr(self.scenario, "on_player_join"):
                self.scenario.on_player_join(self.world, player_id)
        return self.build_world_init(player_id)

    def on_client_disconnect(self, client_id: str):
        binding = self.bindings.get(client_id)
        if binding is None or not binding.connected:
            return
        binding.connected = False
        binding.disconnected_at_step = self.world.step_count

    def tick(self):
        """Retire player agents whose grace window expired. Call after each step."""
        expired = [
            b
            for b in self.bindings.values()
            if not b.connected
            and b.disconnected_at_step is not None
            and self.world.step_count - b.disconnected_at_step >= self.grace_steps
        ]
        for binding in expired:
            if self.world.get_agent(self.manifest.player_species, binding.agent_id) is not None:
                self.world.remove_agent(self.manifest.player_species, binding.agent_id)
            if hasattr(self.scenario, "on_player_leave"):
                self.scenario.on_player_leave(self.world, binding.agent_id)
            del self.bindings[binding.client_id]
            if self._by_name.get(binding.client_name) is binding:
                del self._by_name[binding.client_name]

    # -- world_init ------------------------------------------------------------

    def static_features(self) -> list[GeometryFeature]:
        """Features of every static_init species, with live attribute values.

        Late joiners must see the current world (closed roads, pollution
        bands), so synced attributes are merged in from the agents.
        """
        static_species = {s.species for s in self._sync_specs if s.mode == "static_init"}
        synced_by_species = {
            s.species: s.synced_attributes for s in self._sync_specs if s.mode == "per_step"
        }
        out = []
        for feature in self.scenario.static_features(self.world):
            if feature.species not in static_species:
                continue
            feature = dataclasses.replace(
                feature, coords=list(feature.coords), attributes=dict(feature.attributes)
            )
            agent = self.world.get_agent(feature.species, feature.id)
            if agent is not None:
                for attr in synced_by_species.get(feature.species, []):
                    if attr in agent.attributes:
                        feature.attributes[attr] = agent.attributes[attr]
            out.append(feature)
        return out

    def build_world_init(self, player_id: str | None) -> WorldInitPayload:
        return WorldInitPayload(
            world_bounds=self.world.bounds.as_tuple(),
            transform=self.manifest.transform,
            species_defs=list(self._sync_specs),
            static_features=self.static_features(),
            phase=self.scenario.current_phase(self.world),
            player_id=player_id,
        )

    # -- Inbound player state ----------------------------------------------

    def apply_player_state(self, client_id: str, state: PlayerStatePayload):
        """Write a client's pose onto its player agent (last write wins)."""
        binding = self.bindings.get(client_id)
        if binding is None or not binding.connected:
            raise StaleBinding(client_id)
        agent = self.world.get_agent(self.manifest.player_species, binding.agent_id)
        if agent is None:
            raise StaleBinding(client_id)
        location = from_client_point(state.location, self.manifest.transform)
        heading = yaw_to_heading(state.yaw_deg, self.manifest.transform)
        self.world.set_agent_pose(agent, location, heading)
        agent.attributes["pitch_deg"] = float(state.pitch_deg)
        binding.last_state = state

    # -- Outbound snapshots --------------------------------------------------

    def _snapshot_entities(self) -> list[EntitySnapshot]:
        entities = []
        for spec in self.per_step_specs():
            if not self.world.has_species(spec.species):
                continue
            predicate = self._filters.get(spec.species)
            use_filter = self.manifest.coupling_mode == "projection" and predicate is not None
            for agent in self.world.agents_of(spec.species):
                if not agent.alive:
                    continue
                if use_filter and not predicate(self, agent):
                    continue
                attrs = {
                    name: agent.attributes[name]
                    for name in spec.synced_attributes
                    if name in agent.attributes
                }
                entities.append(
                    EntitySnapshot(
                        species=agent.species,
                        id=agent.id,
                        location=agent.location,
                        heading_deg=agent.heading_deg,
                        attributes=attrs,
                    )
                )
        return entities

    def build_step_update(
        self,
    ) -> tuple[StepUpdatePayload | None, ValueUpdatePayload | None]:
        """Build the outbound payloads for the step that just completed.

        Returns (step_update, value_update); either may be None. In
        background mode the step_update exists only while player agents
        do, and the value channels go out every step; in the other modes
        the snapshot goes out every step and values only when changed.
        """
        entities = self._snapshot_entities()
        current = {(e.species, e.id) for e in entities}
        removed = sorted(self._prev_emitted - current)
        self._prev_emitted = current

        step_payload = StepUpdatePayload(
            step=self.world.step_count, entities=entities, removed=removed
        )
        if self.manifest.coupling_mode == "background" and not entities and not removed:
            step_payload = None

        values = {
            name: self.world.globals[name]
            for name in self.manifest.value_channels
            if name in self.world.globals
        }
        value_payload = None
        if self.manifest.value_channels:
            if self.manifest.coupling_mode == "background":
                value_payload = ValueUpdatePayload(values)
            elif values != self._last_values:
                value_payload = ValueUpdatePayload(values)
        if value_payload is not None:
            self._last_values = dict(values)
        return step_payload, value_payload
