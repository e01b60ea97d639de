"""Road network and routing for the traffic scenario.

Segments are undirected: a vehicle may traverse a segment in either
direction. Routing sees only open segments. Ties between equal-length
routes break deterministically toward the lexicographically smallest
segment-id sequence.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

from ..geometry import GeometryFeature


@dataclass
class Segment:
    id: str
    from_node: str
    to_node: str
    length_m: float
    polyline: list[tuple[float, float]]
    closed: bool = False
    traffic_count: int = 0  # entries this step; reset every step
    emission_sum: float = 0.0  # summed emission factors of this step's entries

    def other_end(self, node: str) -> str:
        return self.to_node if node == self.from_node else self.from_node


class RoadNetwork:
    def __init__(self):
        self.nodes: dict[str, tuple[float, float]] = {}
        self.segments: dict[str, Segment] = {}
        self._adjacency: dict[str, list[str]] = {}

    def add_node(self, node_id: str, xy: tuple[float, float]):
        self.nodes[node_id] = (float(xy[0]), float(xy[1]))
        self._adjacency.setdefault(node_id, [])

    def add_segment(
        self, seg_id: str, from_node: str, to_node: str, polyline=None, closed: bool = False
    ):
        a, b = self.nodes[from_node], self.nodes[to_node]
        length = math.hypot(b[0] - a[0], b[1] - a[1])
        if length <= 0:
            raise ValueError(f"segment {seg_id}: zero length")
        seg = Segment(
            id=seg_id,
            from_node=from_node,
            to_node=to_node,
            length_m=length,
            polyline=[tuple(p) for p in (polyline or [a, b])],
            closed=closed,
        )
        self.segments[seg_id] = seg
        self._adjacency[from_node].append(seg_id)
        self._adjacency[to_node].append(seg_id)
        # Deterministic expansion order for routing.
        self._adjacency[from_node].sort()
        self._adjacency[to_node].sort()

    def adjacent(self, node: str) -> list[str]:
        return self._adjacency.get(node, [])

    def reset_step_counters(self):
        for seg in self.segments.values():
            seg.traffic_count = 0
            seg.emission_sum = 0.0

    def _dijkstra(self, source: str) -> dict[str, float]:
        dist = {source: 0.0}
        heap = [(0.0, source)]
        while heap:
            d, node = heapq.heappop(heap)
            if d > dist.get(node, math.inf):
                continue
            for seg_id in self._adjacency.get(node, []):
                seg = self.segments[seg_id]
                if seg.closed:
                    continue
                nxt = seg.other_end(node)
                nd = d + seg.length_m
                if nd < dist.get(nxt, math.inf):
                    dist[nxt] = nd
                    heapq.heappush(heap, (nd, nxt))
        return dist


def shortest_path(network: RoadNetwork, from_node: str, to_node: str) -> list[str] | None:
    """Minimum-length route over open segments, or None when unreachable.

    Among equal-length optima, returns the lexicographically smallest
    segment-id sequence: after computing exact distances from both ends,
    the route is built greedily by always taking the smallest-id edge
    that stays on some optimal path.
    """
    if from_node not in network.nodes or to_node not in network.nodes:
        raise KeyError(f"unknown node in {from_node!r} -> {to_node!r}")
    if from_node == to_node:
        return []
    dist_from = network._dijkstra(from_node)
    total = dist_from.get(to_node)
    if total is None:
        return None
    dist_to = network._dijkstra(to_node)
    route: list[str] = []
    node = from_node
    walked = 0.0
    while node != to_node:
        chosen = None
        for seg_id in network.adjacent(node):  # already id-sorted
            seg = network.segments[seg_id]
            if seg.closed:
                continue
            nxt = seg.other_end(node)
            if nxt not in dist_to:
                continue
            if math.isclose(walked + seg.length_m + dist_to[nxt], total, rel_tol=0.0, abs_tol=1e-9):
                chosen = seg
                break
        if chosen is None:  # numeric guard; cannot happen on consistent data
            return None
        route.append(chosen.id)
        walked += chosen.length_m
        node = chosen.other_end(node)
    return route


def point_segment_distance(p: tuple[float, float], a: tuple[float, float], b: tuple[float, float]) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    if denom == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / denom))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def point_polyline_distance(p: tuple[float, float], polyline: list[tuple[float, float]]) -> float:
    return min(
        point_segment_distance(p, polyline[i], polyline[i + 1])
        for i in range(len(polyline) - 1)
    )


def position_along(seg: Segment, entry_node: str, offset_m: float) -> tuple[float, float, float]:
    """Point and travel heading at ``offset_m`` along a segment.

    ``entry_node`` orients the traversal. Returns (x, y, heading_deg).
    Offsets are in route meters (length_m); the polyline is scanned by
    proportional arc length.
    """
    pts = seg.polyline if entry_node == seg.from_node else list(reversed(seg.polyline))
    pieces = []
    total = 0.0
    for i in range(len(pts) - 1):
        d = math.hypot(pts[i + 1][0] - pts[i][0], pts[i + 1][1] - pts[i][1])
        pieces.append(d)
        total += d
    target = (offset_m / seg.length_m) * total if seg.length_m > 0 else 0.0
    target = max(0.0, min(target, total))
    acc = 0.0
    for i, d in enumerate(pieces):
        if acc + d >= target or i == len(pieces) - 1:
            f = (target - acc) / d if d > 0 else 0.0
            x = pts[i][0] + f * (pts[i + 1][0] - pts[i][0])
            y = pts[i][1] + f * (pts[i + 1][1] - pts[i][1])
            heading = math.degrees(
                math.atan2(pts[i + 1][1] - pts[i][1], pts[i + 1][0] - pts[i][0])
            ) % 360.0
            return (x, y, heading)
        acc += d
    x, y = pts[-1]
    return (x, y, 0.0)


def network_from_features(road_features: list[GeometryFeature]) -> RoadNetwork:
    """Build a routable network from road polyline features.

    Each road feature carries ``from``/``to`` node ids in its attributes;
    node coordinates are the polyline endpoints. Endpoint positions for a
    shared node id must agree across features.
    """
    net = RoadNetwork()
    for f in road_features:
        from_id = f.attributes.get("from")
        to_id = f.attributes.get("to")
        if not isinstance(from_id, str) or not isinstance(to_id, str):
            raise ValueError(f"road {f.id}: missing from/to node attributes")
        start = (f.coords[0][0], f.coords[0][1])
        end = (f.coords[-1][0], f.coords[-1][1])
        for node_id, xy in ((from_id, start), (to_id, end)):
            if node_id in net.nodes:
                ex = net.nodes[node_id]
                if math.hypot(ex[0] - xy[0], ex[1] - xy[1]) > 1e-6:
                    raise ValueError(f"node {node_id}: inconsistent coordinates")
            else:
                net.add_node(node_id, xy)
    for f in road_features:
        net.add_segment(
            f.id,
            f.attributes["from"],
            f.attributes["to"],
            polyline=[(v[0], v[1]) for v in f.coords],
            closed=bool(f.attributes.get("closed", False)),
        )
    return net
