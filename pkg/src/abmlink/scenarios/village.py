"""Village indicators scenario: background coupling with an exploration phase.

The world carries three indicator values (solid pollution, water
pollution, agricultural production) that drift every step and respond
to commune-level actions. Players trigger an exploration phase during
which indicator stepping pauses and their avatars are echoed to
observers; a phase_done frame (or a server-side timeout) resumes the
decision phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from ..kernel import ActionDef, Bounds, KernelError, SpeciesDef, World
from ..manifest import CouplingManifest, SpeciesSyncSpec
from .base import Scenario

DRIFT = {"solid_pollution": 0.5, "water_pollution": 0.3, "production": -0.2}
ACTION_EFFECTS = {
    "collect_waste": {"solid_pollution": -5.0},
    "treat_water": {"water_pollution": -4.0},
    "fertilize": {"production": 3.0, "water_pollution": 1.0},
}
INITIAL_VALUES = {"solid_pollution": 20.0, "water_pollution": 15.0, "production": 60.0}
EXPLORATION_GRACE_S = 5.0


@dataclass(frozen=True)
class VillageState:
    solid_pollution: float = INITIAL_VALUES["solid_pollution"]
    water_pollution: float = INITIAL_VALUES["water_pollution"]
    production: float = INITIAL_VALUES["production"]

    def values(self) -> dict[str, float]:
        return {
            "solid_pollution": self.solid_pollution,
            "water_pollution": self.water_pollution,
            "production": self.production,
        }


def step_indicators(state: VillageState, actions: list[str]) -> VillageState:
    """One indicator step: baseline drift plus pending action effects, clamped.

    All three values stay inside [0, 100] regardless of the action mix.
    """
    deltas = dict(DRIFT)
    for name in actions:
        for key, effect in ACTION_EFFECTS[name].items():
            deltas[key] += effect
    clamped = {
        key: min(100.0, max(0.0, getattr(state, key) + deltas[key])) for key in deltas
    }
    return VillageState(**clamped)


class VillageIndicators(Scenario):
    name = "village_indicators"
    SPECIES = ("player",)

    def install(self, world: World, step_period_ms: int = 100, **params):
        if params:
            raise ValueError(f"unknown village parameters {sorted(params)}")
        world.bounds = Bounds(0.0, 0.0, 200.0, 200.0)
        world.define_species(SpeciesDef("player", {"pitch_deg": "number"}))
        world.data["village"] = {
            "commune": VillageState(),
            "players": {},  # agent_id -> VillageState, stepped identically
            "phase": "decision",
            "explore_end_step": None,
            "explore_duration_s": None,
            "pending": [],
        }
        world.data["step_period_ms"] = step_period_ms
        world.globals.update(VillageState().values())

        for name in ACTION_EFFECTS:
            world.register_action(ActionDef(name, (), self._make_effect_handler(name)))
        world.register_action(ActionDef("start_exploration", ("number",), self._start_exploration))
        world.add_post_hook("indicators", self._post_step)

    @staticmethod
    def _make_effect_handler(name: str):
        def handler(world: World):
            world.data["village"]["pending"].append(name)
            return None

        return handler

    # -- Exploration phase -------------------------------------------------------

    def _start_exploration(self, world: World, duration_s: float):
        v = world.data["village"]
        if v["phase"] == "exploration":
            raise KernelError("exploration already in progress")
        if not duration_s > 0:
            raise KernelError("duration_s must be positive")
        steps = math.ceil(
            (duration_s + EXPLORATION_GRACE_S) * 1000.0 / world.data["step_period_ms"]
        )
        v["phase"] = "exploration"
        v["explore_end_step"] = world.step_count + steps
        v["explore_duration_s"] = float(duration_s)
        world.outbox.append(("phase", {"name": "exploration", "duration_s": float(duration_s)}))
        indicators = {k: world.globals[k] for k in INITIAL_VALUES}
        world.outbox.append(("value_update", {"values": indicators}))
        return None

    def _end_exploration(self, world: World):
        v = world.data["village"]
        v["phase"] = "decision"
        v["explore_end_step"] = None
        v["explore_duration_s"] = None
        world.outbox.append(("phase", {"name": "decision", "duration_s": None}))

    def on_phase_done(self, world: World, name: str):
        v = world.data["village"]
        if v["phase"] != "exploration" or name != "exploration":
            world.outbox.append(
                ("debug", {"level": "warn", "text": f"ignored phase_done {name!r}"})
            )
            return
        self._end_exploration(world)

    def current_phase(self, world: World):
        from ..protocol import PhasePayload

        v = world.data["village"]
        return PhasePayload(name=v["phase"], duration_s=v["explore_duration_s"])

    # -- Stepping ---------------------------------------------------------------

    def _post_step(self, world: World):
        v = world.data["village"]
        if v["phase"] == "exploration":
            # Indicator stepping pauses; force the transition if the
            # client never reports the phase done.
            if world.step_count + 1 >= v["explore_end_step"]:
                self._end_exploration(world)
            return
        pending = list(v["pending"])
        v["pending"] = []
        v["commune"] = step_indicators(v["commune"], pending)
        v["players"] = {
            agent_id: step_indicators(state, pending) for agent_id, state in v["players"].items()
        }
        world.globals.update(v["commune"].values())

    # -- Player lifecycle ---------------------------------------------------------

    def on_player_join(self, world: World, agent_id: str):
        v = world.data["village"]
        if agent_id not in v["players"]:
            v["players"][agent_id] = replace(v["commune"])

    def on_player_leave(self, world: World, agent_id: str):
        world.data["village"]["players"].pop(agent_id, None)

    def spawn_point(self, world: World):
        return (100.0, 100.0, 0.0)

    def default_manifest(self) -> CouplingManifest:
        return CouplingManifest(
            scenario=self.name,
            coupling_mode="background",
            min_players=1,
            max_players=4,
            player_species="player",
            species_specs=[
                SpeciesSyncSpec(
                    "player",
                    "background_only",
                    dims="3d",
                    color=(255, 210, 0),
                    tag="player",
                    has_collider=True,
                ),
            ],
            value_channels=["solid_pollution", "water_pollution", "production"],
            step_period_ms=100,
        )
