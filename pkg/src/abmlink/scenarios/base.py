"""Scenario contract: everything a runnable model plugs into the kernel."""

from __future__ import annotations

from ..geometry import GeometryFeature, Vec3
from ..kernel import World
from ..manifest import CouplingManifest
from ..protocol import PhasePayload


class Scenario:
    """A runnable model: species, behaviors, actions, and static scene.

    ``SPECIES`` is declared statically so manifests can be validated
    before any world exists. ``install`` wires everything onto a fresh
    world and populates it.
    """

    name: str = ""
    SPECIES: tuple[str, ...] = ()
    player_species: str = "player"

    def install(self, world: World, step_period_ms: int = 100, **params):
        raise NotImplementedError

    def static_features(self, world: World) -> list[GeometryFeature]:
        return []

    def spawn_point(self, world: World) -> Vec3:
        b = world.bounds
        return ((b.min_x + b.max_x) / 2.0, (b.min_y + b.max_y) / 2.0, 0.0)

    def current_phase(self, world: World) -> PhasePayload | None:
        return None

    def on_phase_done(self, world: World, name: str):
        world.outbox.append(("debug", {"level": "warn", "text": f"unexpected phase_done {name!r}"}))

    def default_manifest(self) -> CouplingManifest:
        raise NotImplementedError
