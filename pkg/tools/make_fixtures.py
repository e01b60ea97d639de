#!/usr/bin/env python3
"""Regenerate the shipped scenario fixtures.

Deterministic by construction: rerunning this script reproduces the
committed files byte for byte.

    python tools/make_fixtures.py
"""

from __future__ import annotations

import json
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from abmlink.manifest import manifest_bytes  # noqa: E402
from abmlink.scenarios import get_scenario  # noqa: E402

FIXTURES = ROOT / "src" / "abmlink" / "fixtures"

ROAD_COLOR = [30, 30, 30]
BUILDING_COLOR = [170, 170, 160]


def road(rid, from_id, to_id, a, b):
    return {
        "species": "road",
        "id": rid,
        "dims": "2d",
        "shape": {"type": "polyline", "coords": [[float(a[0]), float(a[1])], [float(b[0]), float(b[1])]]},
        "height_m": 0.0,
        "color": ROAD_COLOR,
        "tag": "road",
        "has_collider": True,
        "interactable": True,
        "attributes": {"closed": False, "from": from_id, "to": to_id},
    }


def building(bid, cx, cy, w, h, height):
    hw, hh = w / 2.0, h / 2.0
    coords = [
        [cx - hw, cy - hh],
        [cx + hw, cy - hh],
        [cx + hw, cy + hh],
        [cx - hw, cy + hh],
    ]
    return {
        "species": "building",
        "id": bid,
        "dims": "3d",
        "shape": {"type": "polygon", "coords": [[float(x), float(y)] for x, y in coords]},
        "height_m": float(height),
        "color": BUILDING_COLOR,
        "tag": "building",
        "has_collider": True,
        "interactable": False,
        "attributes": {"pollution_band": 0},
    }


def district_features():
    cols, rows = 5, 4
    dx, dy = 120.0, 100.0
    node_pos = {}
    for r in range(rows):
        for c in range(cols):
            node_pos[f"n{r}{c}"] = (c * dx, r * dy)

    features = []
    rid = 0
    for r in range(rows):
        for c in range(cols - 1):
            a, b = f"n{r}{c}", f"n{r}{c + 1}"
            features.append(road(f"R{rid}", a, b, node_pos[a], node_pos[b]))
            rid += 1
    for r in range(rows - 1):
        for c in range(cols):
            a, b = f"n{r}{c}", f"n{r + 1}{c}"
            features.append(road(f"R{rid}", a, b, node_pos[a], node_pos[b]))
            rid += 1
    for r in range(rows - 1):
        for c in range(cols - 1):
            if (r + c) % 2 == 0 and rid < 39:
                a, b = f"n{r}{c}", f"n{r + 1}{c + 1}"
                features.append(road(f"R{rid}", a, b, node_pos[a], node_pos[b]))
                rid += 1

    offsets = [(24.0, 22.0), (62.0, 18.0), (96.0, 30.0), (30.0, 72.0), (82.0, 76.0)]
    bid = 0
    for r in range(rows - 1):
        for c in range(cols - 1):
            ox, oy = c * dx, r * dy
            for i, (bx, by) in enumerate(offsets):
                height = 8.0 + ((bid * 7) % 18)
                features.append(building(f"B{bid}", ox + bx, oy + by, 16.0, 12.0, height))
                bid += 1
    return features


def two_route_features():
    nodes = {
        "O": (0.0, 100.0),
        "A1": (150.0, 100.0),
        "A2": (250.0, 100.0),
        "D": (400.0, 100.0),
        "B1": (100.0, 250.0),
        "B2": (300.0, 250.0),
    }
    segs = [
        ("RC0", "O", "A1"),
        ("RC1", "A1", "A2"),  # the central road the deferral test closes
        ("RC2", "A2", "D"),
        ("RP0", "O", "B1"),
        ("RP1", "B1", "B2"),
        ("RP2", "B2", "D"),
    ]
    features = [road(rid, a, b, nodes[a], nodes[b]) for rid, a, b in segs]
    features.append(building("BA0", 200.0, 60.0, 10.0, 10.0, 10.0))  # zone A, near RC1 only
    features.append(building("BA1", 200.0, 140.0, 10.0, 10.0, 10.0))
    features.append(building("BB0", 200.0, 210.0, 10.0, 10.0, 10.0))  # zone B, near RP1 only
    features.append(building("BB1", 200.0, 290.0, 10.0, 10.0, 10.0))
    return features


def write(path: pathlib.Path, features):
    doc = {"features": features}
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {path} ({len(features)} features)")


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    write(FIXTURES / "district_traffic.features.json", district_features())
    write(FIXTURES / "two_route.features.json", two_route_features())
    for name in ("district_traffic", "village_indicators"):
        manifest = get_scenario(name).default_manifest()
        out = FIXTURES / f"{name}.manifest.json"
        out.write_bytes(manifest_bytes(manifest))
        print(f"wrote {out}")


if __name__ == "__main__":
    main()
