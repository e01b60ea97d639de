"""Geometry primitives shared by the simulation and its clients.

Three concerns live here: feature records for static scene geometry
(points, polylines, polygons in simulation meters), the affine and
axis-convention transform between simulation space and client space,
and a JSON feature-collection format for importing and exporting
static scenes.

Conventions: simulation space is x east, y north, z up, in meters.
Client space puts the ground plane on (x, z) with y up, so simulation
(x, y) maps to client (x, z) and simulation z maps to client y.
``flip_vertical_axis`` negates the simulation y axis on the way to the
client ground plane, for sources whose second axis points down-screen.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, IO

Vec3 = tuple[float, float, float]
Scalar = bool | int | float | str

SHAPE_TYPES = ("point", "polyline", "polygon")
MIN_VERTICES = {"point": 1, "polyline": 2, "polygon": 3}


class GeometryError(Exception):
    """A shape violates its vertex-count or numeric constraints."""


class PropertyError(Exception):
    """Feature property combination is invalid (e.g. pickable but unhittable)."""


class ParseError(Exception):
    """A feature-collection document is malformed."""


class IoError(Exception):
    """Reading or writing a feature-collection file failed."""


def _is_scalar(v: Any) -> bool:
    return isinstance(v, (bool, int, float, str))


def _as_float(v: Any, what: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"{what}: expected a number, got {type(v).__name__}")
    f = float(v)
    if not math.isfinite(f):
        raise GeometryError(f"{what}: must be finite")
    return f


@dataclass(frozen=True)
class SimTransform:
    """Conversion between simulation meters and client units.

    ``offset`` is subtracted in simulation space before scaling, so it is
    the simulation point that lands on the client origin.
    """

    scale: float = 1.0
    offset: Vec3 = (0.0, 0.0, 0.0)
    flip_vertical_axis: bool = False

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise GeometryError(f"transform scale must be positive, got {self.scale}")

    @property
    def sign(self) -> float:
        return -1.0 if self.flip_vertical_axis else 1.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "scale": float(self.scale),
            "offset": [float(c) for c in self.offset],
            "flip_vertical_axis": self.flip_vertical_axis,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SimTransform":
        if not isinstance(d, dict):
            raise ParseError("transform: expected an object")
        try:
            scale = _as_float(d["scale"], "transform.scale")
            raw = d["offset"]
            flip = d["flip_vertical_axis"]
        except KeyError as exc:
            raise ParseError(f"transform: missing field {exc.args[0]!r}") from None
        if not isinstance(raw, (list, tuple)) or len(raw) != 3:
            raise ParseError("transform.offset: expected a 3-vector")
        if not isinstance(flip, bool):
            raise ParseError("transform.flip_vertical_axis: expected a boolean")
        offset = tuple(_as_float(c, "transform.offset") for c in raw)
        return cls(scale=scale, offset=offset, flip_vertical_axis=flip)


def to_client_point(p: Vec3, t: SimTransform) -> Vec3:
    """Map a simulation-space point into client space.

    The simulation ground plane (x, y) lands on the client ground plane
    (x, z); simulation z (elevation) lands on client y (up).
    """
    s = t.scale
    qx = p[0] - t.offset[0]
    qy = p[1] - t.offset[1]
    qz = (p[2] if len(p) > 2 else 0.0) - t.offset[2]
    return (qx * s, qz * s, t.sign * qy * s)


def from_client_point(c: Vec3, t: SimTransform) -> Vec3:
    """Exact inverse of :func:`to_client_point`."""
    s = t.scale
    return (
        c[0] / s + t.offset[0],
        t.sign * c[2] / s + t.offset[1],
        c[1] / s + t.offset[2],
    )


def normalize_deg(angle: float) -> float:
    """Normalize an angle in degrees into [0, 360)."""
    a = math.fmod(angle, 360.0)
    if a < 0:
        a += 360.0
    return 0.0 if a == 360.0 else a


def heading_to_yaw(heading_deg: float, t: SimTransform) -> float:
    """Convert a simulation heading (CCW from +x) to a client yaw.

    Client yaw is the angle whose direction vector is
    (sin yaw, 0, cos yaw): yaw 0 faces client +z, yaw 90 faces client +x.
    Heading 0 (simulation +x) always maps to client +x.
    """
    return normalize_deg(90.0 - t.sign * heading_deg)


def yaw_to_heading(yaw_deg: float, t: SimTransform) -> float:
    """Inverse of :func:`heading_to_yaw`."""
    return normalize_deg(t.sign * (90.0 - yaw_deg))


@dataclass
class EntitySnapshot:
    """One agent's per-step state as seen by clients."""

    species: str
    id: str
    location: Vec3
    heading_deg: float
    attributes: dict[str, Scalar] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "species": self.species,
            "id": self.id,
            "location": [float(c) for c in self.location],
            "heading_deg": float(self.heading_deg),
            "attributes": {k: self.attributes[k] for k in sorted(self.attributes)},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EntitySnapshot":
        if not isinstance(d, dict):
            raise ParseError("entity: expected an object")
        try:
            species = d["species"]
            ident = d["id"]
            raw_loc = d["location"]
            heading = _as_float(d["heading_deg"], "entity.heading_deg")
        except KeyError as exc:
            raise ParseError(f"entity: missing field {exc.args[0]!r}") from None
        if not isinstance(species, str) or not isinstance(ident, str):
            raise ParseError("entity: species and id must be strings")
        if not isinstance(raw_loc, (list, tuple)) or len(raw_loc) != 3:
            raise ParseError("entity.location: expected a 3-vector")
        if not (0.0 <= heading < 360.0):
            raise ParseError(f"entity.heading_deg: {heading} outside [0, 360)")
        attrs = d.get("attributes", {})
        if not isinstance(attrs, dict) or not all(
            isinstance(k, str) and _is_scalar(v) for k, v in attrs.items()
        ):
            raise ParseError("entity.attributes: expected a string-to-scalar map")
        location = tuple(_as_float(c, "entity.location") for c in raw_loc)
        return cls(species, ident, location, heading, dict(attrs))


@dataclass
class GeometryFeature:
    """A static scene feature in simulation meters.

    ``height_m`` extrudes flat shapes for display (0 means flat).
    ``interactable`` implies ``has_collider``: clients cannot pick what
    they cannot hit-test.
    """

    species: str
    id: str
    dims: str  # "2d" | "3d"
    shape_type: str  # "point" | "polyline" | "polygon"
    coords: list[tuple[float, ...]]
    height_m: float = 0.0
    color: tuple[int, int, int] = (128, 128, 128)
    tag: str = ""
    has_collider: bool = False
    interactable: bool = False
    attributes: dict[str, Scalar] = field(default_factory=dict)

    def validate(self):
        if self.dims not in ("2d", "3d"):
            raise GeometryError(f"feature {self.id}: dims must be 2d or 3d")
        if self.shape_type not in SHAPE_TYPES:
            raise GeometryError(f"feature {self.id}: unknown shape type {self.shape_type!r}")
        if len(self.coords) < MIN_VERTICES[self.shape_type]:
            raise GeometryError(
                f"feature {self.id}: {self.shape_type} needs at least "
                f"{MIN_VERTICES[self.shape_type]} vertices, got {len(self.coords)}"
            )
        for v in self.coords:
            if len(v) not in (2, 3) or not all(math.isfinite(c) for c in v):
                raise GeometryError(f"feature {self.id}: bad vertex {v!r}")
        if not (self.height_m >= 0 and math.isfinite(self.height_m)):
            raise GeometryError(f"feature {self.id}: height_m must be non-negative")
        if len(self.color) != 3 or not all(
            isinstance(c, int) and not isinstance(c, bool) and 0 <= c <= 255 for c in self.color
        ):
            raise GeometryError(f"feature {self.id}: color must be three bytes")
        if self.interactable and not self.has_collider:
            raise PropertyError(f"feature {self.id}: interactable requires has_collider")

    def centroid(self) -> Vec3:
        n = len(self.coords)
        x = sum(v[0] for v in self.coords) / n
        y = sum(v[1] for v in self.coords) / n
        z = sum((v[2] if len(v) > 2 else 0.0) for v in self.coords) / n
        return (x, y, z)

    def to_dict(self) -> dict[str, Any]:
        return {
            "species": self.species,
            "id": self.id,
            "dims": self.dims,
            "shape": {
                "type": self.shape_type,
                "coords": [[float(c) for c in v] for v in self.coords],
            },
            "height_m": float(self.height_m),
            "color": list(self.color),
            "tag": self.tag,
            "has_collider": self.has_collider,
            "interactable": self.interactable,
            "attributes": {k: self.attributes[k] for k in sorted(self.attributes)},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GeometryFeature":
        if not isinstance(d, dict):
            raise ParseError("feature: expected an object")
        try:
            shape = d["shape"]
            feature = cls(
                species=d["species"],
                id=d["id"],
                dims=d["dims"],
                shape_type=shape["type"] if isinstance(shape, dict) else None,
                coords=[],
                height_m=_as_float(d.get("height_m", 0.0), "feature.height_m"),
                tag=d.get("tag", ""),
                has_collider=bool(d.get("has_collider", False)),
                interactable=bool(d.get("interactable", False)),
            )
        except KeyError as exc:
            raise ParseError(f"feature: missing field {exc.args[0]!r}") from None
        if not isinstance(shape, dict) or "coords" not in shape:
            raise ParseError(f"feature {d.get('id')}: shape must be an object with type and coords")
        raw_coords = shape["coords"]
        if not isinstance(raw_coords, list):
            raise ParseError(f"feature {feature.id}: shape.coords must be a list")
        for v in raw_coords:
            if not isinstance(v, (list, tuple)):
                raise ParseError(f"feature {feature.id}: bad vertex {v!r}")
            feature.coords.append(tuple(_as_float(c, f"feature {feature.id} vertex") for c in v))
        color = d.get("color", [128, 128, 128])
        if not isinstance(color, (list, tuple)) or len(color) != 3:
            raise ParseError(f"feature {feature.id}: color must be [r, g, b]")
        feature.color = tuple(int(c) for c in color)
        attrs = d.get("attributes", {})
        if not isinstance(attrs, dict) or not all(
            isinstance(k, str) and _is_scalar(v) for k, v in attrs.items()
        ):
            raise ParseError(f"feature {feature.id}: attributes must map strings to scalars")
        feature.attributes = dict(attrs)
        if not isinstance(feature.species, str) or not isinstance(feature.id, str):
            raise ParseError("feature: species and id must be strings")
        feature.validate()
        return feature


def flatten_2d(feature: GeometryFeature) -> GeometryFeature:
    """Project a feature onto its ground-plane footprint.

    Drops z from every vertex, forces dims to 2d and height to 0; this
    is the shape a strictly two-dimensional export preserves.
    """
    return GeometryFeature(
        species=feature.species,
        id=feature.id,
        dims="2d",
        shape_type=feature.shape_type,
        coords=[(v[0], v[1]) for v in feature.coords],
        height_m=0.0,
        color=feature.color,
        tag=feature.tag,
        has_collider=feature.has_collider,
        interactable=feature.interactable,
        attributes=dict(feature.attributes),
    )


def _open_for(file: str | IO, mode: str):
    if hasattr(file, "read") or hasattr(file, "write"):
        return file, False
    try:
        return open(file, mode, encoding="utf-8"), True
    except OSError as exc:
        raise IoError(str(exc)) from exc


def import_features(file: str | IO) -> list[GeometryFeature]:
    """Read a feature-collection document.

    Order is preserved. Raises ParseError for malformed documents,
    GeometryError / PropertyError for invalid features, IoError for
    filesystem failures.
    """
    handle, owned = _open_for(file, "r")
    try:
        try:
            doc = json.load(handle)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ParseError(f"not a valid feature collection: {exc}") from exc
        except OSError as exc:
            raise IoError(str(exc)) from exc
    finally:
        if owned:
            handle.close()
    if not isinstance(doc, dict) or not isinstance(doc.get("features"), list):
        raise ParseError("document must be an object with a 'features' list")
    return [GeometryFeature.from_dict(f) for f in doc["features"]]


def export_features(features: list[GeometryFeature], file: str | IO):
    """Write features as a 2D feature-collection document.

    Every feature is flattened to its ground-plane footprint first, so
    ``import_features(export_features(F))`` equals ``flatten_2d`` of F.
    """
    for f in features:
        f.validate()
    doc = {"features": [flatten_2d(f).to_dict() for f in features]}
    handle, owned = _open_for(file, "w")
    try:
        try:
            json.dump(doc, handle, indent=2, allow_nan=False)
            handle.write("\n")
        except OSError as exc:
            raise IoError(str(exc)) from exc
    finally:
        if owned:
            handle.close()
