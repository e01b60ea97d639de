"""District traffic scenario: vehicles, closable roads, pollution, score.

Cars and motorcycles shuttle between random nodes of a road network
along shortest open routes. Closing a road displaces traffic rather
than removing it; buildings accumulate pollution from the traffic
entering nearby segments, and a district score summarizes pollution
and blocked vehicles every step.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from importlib import resources

from ..geometry import GeometryFeature, import_features
from ..kernel import ActionDef, Bounds, SpeciesDef, UnknownTarget, World
from ..manifest import CouplingManifest, SpeciesSyncSpec
from .base import Scenario
from .roads import RoadNetwork, network_from_features, point_polyline_distance, position_along, shortest_path


@dataclass
class DistrictConfig:
    """Pinned model constants; every value is a named key on purpose."""

    n_cars: int = 200
    n_motorcycles: int = 300
    car_speed_mps: float = 8.0
    motorcycle_speed_mps: float = 6.0
    car_emission_per_m: float = 1.0
    motorcycle_emission_per_m: float = 0.4
    pollution_decay: float = 0.98
    band_edges: tuple[float, ...] = (10.0, 25.0, 50.0, 80.0)
    influence_radius_m: float = 50.0
    bounds_margin_m: float = 50.0


@dataclass
class VehicleState:
    dest_node: str
    route: list[str] = field(default_factory=list)
    seg_index: int = 0
    offset_m: float = 0.0
    entry_node: str = ""
    node: str | None = None  # set while standing at a node (no active segment)
    waiting: bool = False


def pollution_band(pollution: float, edges=DistrictConfig.band_edges) -> int:
    return bisect.bisect_right(list(edges), pollution)


def default_features_path() -> str:
    return str(resources.files("abmlink") / "fixtures" / "district_traffic.features.json")


class DistrictTraffic(Scenario):
    name = "district_traffic"
    SPECIES = ("car", "motorcycle", "road", "building", "player")

    def __init__(self):
        self.features: list[GeometryFeature] = []
        self.config = DistrictConfig()

    # -- Installation --------------------------------------------------------

    def install(self, world: World, step_period_ms: int = 100, **params):
        features_file = params.pop("features_file", None) or default_features_path()
        for key, value in params.items():
            if not hasattr(self.config, key):
                raise ValueError(f"unknown district parameter {key!r}")
            setattr(self.config, key, type(getattr(self.config, key))(value))
        cfg = self.config

        self.features = import_features(features_file)
        roads = [f for f in self.features if f.species == "road"]
        buildings = [f for f in self.features if f.species == "building"]
        network = network_from_features(roads)

        xs = [v[0] for f in self.features for v in f.coords]
        ys = [v[1] for f in self.features for v in f.coords]
        m = cfg.bounds_margin_m
        world.bounds = Bounds(min(xs) - m, min(ys) - m, max(xs) + m, max(ys) + m)
        world.data["network"] = network
        world.data["vehicles"] = {}
        world.data["step_dt"] = step_period_ms / 1000.0
        world.globals["score"] = 1000
        world.globals["vehicle_meters_total"] = 0.0

        vehicle_schema = {"speed_mps": "number", "emission_per_m": "number", "waiting": "boolean"}
        world.define_species(SpeciesDef("car", vehicle_schema, behavior="vehicle_move"))
        world.define_species(SpeciesDef("motorcycle", vehicle_schema, behavior="vehicle_move"))
        world.define_species(SpeciesDef("road", {"closed": "boolean"}))
        world.define_species(
            SpeciesDef(
                "building",
                {"pollution": "number", "pollution_band": "number"},
                behavior="building_pollution",
            )
        )
        world.define_species(SpeciesDef("player", {"pitch_deg": "number"}))

        world.register_behavior("vehicle_move", self._vehicle_move)
        world.register_behavior("building_pollution", self._building_pollution)
        world.register_action(ActionDef("toggle_road", ("string",), toggle_road))
        world.add_pre_hook("reset_traffic", lambda w: w.data["network"].reset_step_counters())
        world.add_post_hook("score", self._compute_score_hook)

        # Roads and buildings are agents too: their synced attributes
        # (closed, pollution_band) ride in snapshots while their geometry
        # ships once at init.
        for road in roads:
            self._spawn_with_id(world, "road", road.id, road.centroid(), {"closed": False})
        near: dict[str, list[str]] = {}
        for b in buildings:
            cx, cy, _ = b.centroid()
            near[b.id] = sorted(
                seg.id
                for seg in network.segments.values()
                if point_polyline_distance((cx, cy), seg.polyline) <= cfg.influence_radius_m
            )
            self._spawn_with_id(
                world, "building", b.id, (cx, cy, 0.0), {"pollution": 0.0, "pollution_band": 0}
            )
        world.data["near_segments"] = near

        rng = world.derived_rng("init", "vehicles")
        node_ids = sorted(network.nodes)
        plan = [("car", cfg.n_cars, cfg.car_speed_mps, cfg.car_emission_per_m)]
        plan.append(
            ("motorcycle", cfg.n_motorcycles, cfg.motorcycle_speed_mps, cfg.motorcycle_emission_per_m)
        )
        for species, count, speed, emission in plan:
            for _ in range(count):
                start = rng.choice(node_ids)
                dest = rng.choice([n for n in node_ids if n != start])
                x, y = network.nodes[start]
                agent_id = world.spawn_agent(
                    species,
                    (x, y, 0.0),
                    {"speed_mps": speed, "emission_per_m": emission, "waiting": False},
                )
                world.data["vehicles"][agent_id] = VehicleState(dest_node=dest, node=start)

    @staticmethod
    def _spawn_with_id(world: World, species: str, wanted_id: str, location, attributes):
        # Fixture ids (R3, B7) are authoritative; bypass the counter naming.
        agent_id = world.spawn_agent(species, location, attributes)
        store = world._agents[species]
        agent = store.pop(agent_id)
        agent.id = wanted_id
        store[wanted_id] = agent

    # -- Behaviors -------------------------------------------------------------

    def _vehicle_move(self, world: World, agent, rng):
        state: VehicleState = world.data["vehicles"][agent.id]
        network: RoadNetwork = world.data["network"]
        budget = agent.attributes["speed_mps"] * world.data["step_dt"]
        moved = 0.0

        while budget > 1e-9:
            if state.node is not None:
                if state.node == state.dest_node:
                    node_ids = sorted(network.nodes)
                    state.dest_node = rng.choice([n for n in node_ids if n != state.node])
                route = shortest_path(network, state.node, state.dest_node)
                if route is None:
                    state.waiting = True
                    break
                state.waiting = False
                state.route = route
                state.seg_index = 0
                state.entry_node = state.node
                state.offset_m = 0.0
                state.node = None
                self._enter_segment(network, route[0], agent)
            seg = network.segments[state.route[state.seg_index]]
            remaining = seg.length_m - state.offset_m
            if budget < remaining:
                state.offset_m += budget
                moved += budget
                budget = 0.0
            else:
                budget -= remaining
                moved += remaining
                arrived = seg.other_end(state.entry_node)
                state.seg_index += 1
                if state.seg_index >= len(state.route):
                    # Trip done: park for the rest of this step (leftover
                    # budget is spent standing) and draw the next errand.
                    state.node = arrived
                    state.route = []
                    state.seg_index = 0
                    state.offset_m = 0.0
                    node_ids = sorted(network.nodes)
                    state.dest_node = rng.choice([n for n in node_ids if n != arrived])
                    break
                rest = state.route[state.seg_index :]
                if any(network.segments[sid].closed for sid in rest):
                    # A road ahead closed since assignment: never enter it.
                    reroute = shortest_path(network, arrived, state.dest_node)
                    if reroute is None:
                        state.node = arrived
                        state.route = []
                        state.seg_index = 0
                        state.offset_m = 0.0
                        state.waiting = True
                        break
                    state.route = state.route[: state.seg_index] + reroute
                state.entry_node = arrived
                state.offset_m = 0.0
                self._enter_segment(network, state.route[state.seg_index], agent)

        if state.node is not None:
            x, y = network.nodes[state.node]
            world.set_agent_pose(agent, (x, y, 0.0))
        else:
            seg = network.segments[state.route[state.seg_index]]
            x, y, heading = position_along(seg, state.entry_node, state.offset_m)
            world.set_agent_pose(agent, (x, y, 0.0), heading)
        agent.attributes["waiting"] = state.waiting
        world.globals["vehicle_meters_total"] += moved

    @staticmethod
    def _enter_segment(network: RoadNetwork, seg_id: str, agent):
        seg = network.segments[seg_id]
        seg.traffic_count += 1
        seg.emission_sum += agent.attributes["emission_per_m"]

    def _building_pollution(self, world: World, agent, rng):
        network: RoadNetwork = world.data["network"]
        inflow = sum(
            network.segments[sid].emission_sum
            for sid in world.data["near_segments"][agent.id]
        )
        pollution = self.config.pollution_decay * agent.attributes["pollution"] + inflow
        agent.attributes["pollution"] = pollution
        agent.attributes["pollution_band"] = pollution_band(pollution, self.config.band_edges)

    # -- Score ------------------------------------------------------------------

    def _compute_score_hook(self, world: World):
        world.globals["score"] = compute_score(world)

    # -- Static scene and defaults -------------------------------------------------

    def static_features(self, world: World) -> list[GeometryFeature]:
        return [f for f in self.features if f.species in ("road", "building")]

    def default_manifest(self) -> CouplingManifest:
        return CouplingManifest(
            scenario=self.name,
            coupling_mode="bijection",
            min_players=1,
            max_players=4,
            player_species="player",
            species_specs=[
                SpeciesSyncSpec("car", "per_step", dims="3d", color=(60, 120, 220), tag="vehicle"),
                SpeciesSyncSpec(
                    "motorcycle", "per_step", dims="3d", color=(220, 140, 40), tag="vehicle"
                ),
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
                SpeciesSyncSpec(
                    "road",
                    "per_step",
                    dims="2d",
                    color=(30, 30, 30),
                    tag="road",
                    has_collider=True,
                    interactable=True,
                    synced_attributes=["closed"],
                ),
                SpeciesSyncSpec(
                    "building",
                    "per_step",
                    dims="3d",
                    color=(170, 170, 160),
                    tag="building",
                    has_collider=True,
                    synced_attributes=["pollution_band"],
                ),
                SpeciesSyncSpec(
                    "player",
                    "per_step",
                    dims="3d",
                    color=(255, 210, 0),
                    tag="player",
                    has_collider=True,
                    synced_attributes=["pitch_deg"],
                ),
            ],
            value_channels=["score"],
            step_period_ms=100,
        )


def compute_score(world: World) -> int:
    """District score: 1000 minus pollution and blocked-vehicle penalties."""
    buildings = world.agents_of("building")
    mean_pollution = (
        sum(b.attributes["pollution"] for b in buildings) / len(buildings) if buildings else 0.0
    )
    waiting = sum(
        1
        for species in ("car", "motorcycle")
        for v in world.agents_of(species)
        if v.attributes["waiting"]
    )
    return round(1000.0 - mean_pollution * 10.0 - 0.1 * waiting)


def toggle_road(world: World, road_id: str) -> bool:
    """Flip a road's closed state; routing sees the change immediately."""
    network: RoadNetwork = world.data["network"]
    seg = network.segments.get(road_id)
    agent = world.get_agent("road", road_id)
    if seg is None or agent is None:
        raise UnknownTarget(f"road {road_id!r}")
    seg.closed = not seg.closed
    agent.attributes["closed"] = seg.closed
    return seg.closed
