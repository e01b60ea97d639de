"""Coupling manifest: the declarative contract between a simulation and its clients.

A manifest names the scenario, the player limits, the coupling mode, one
sync spec per (species, mode) pair, the space transform, and the global
value channels pushed to clients. The wizard writes manifests; the
server and linker consume them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .geometry import ParseError, SimTransform

SYNC_MODES = ("per_step", "static_init", "background_only")
COUPLING_MODES = ("bijection", "projection", "background")


class ValidationError(Exception):
    """Manifest contents violate an invariant; message carries the field path."""


@dataclass
class SpeciesSyncSpec:
    """One species' coupling contract.

    ``per_step`` species are snapshotted every step, ``static_init``
    species ship their geometry once in world_init, ``background_only``
    species are simulated but never sent. A species may carry both a
    static_init spec (geometry) and a per_step spec (attribute sync).
    """

    species: str
    mode: str
    dims: str = "2d"
    color: tuple[int, int, int] = (128, 128, 128)
    tag: str = ""
    has_collider: bool = False
    interactable: bool = False
    synced_attributes: list[str] = field(default_factory=list)
    filter: str | None = None

    def validate(self, path: str = "spec"):
        if not self.species:
            raise ValidationError(f"{path}.species: must be non-empty")
        if self.mode not in SYNC_MODES:
            raise ValidationError(f"{path}.mode: {self.mode!r} not one of {SYNC_MODES}")
        if self.dims not in ("2d", "3d"):
            raise ValidationError(f"{path}.dims: must be 2d or 3d")
        if len(self.color) != 3 or not all(
            isinstance(c, int) and not isinstance(c, bool) and 0 <= c <= 255 for c in self.color
        ):
            raise ValidationError(f"{path}.color: must be three bytes")
        if self.interactable and not self.has_collider:
            raise ValidationError(f"{path}.interactable: requires has_collider")
        if self.filter is not None and self.mode != "per_step":
            raise ValidationError(f"{path}.filter: only meaningful with mode per_step")
        if not all(isinstance(a, str) and a for a in self.synced_attributes):
            raise ValidationError(f"{path}.synced_attributes: must be non-empty strings")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "species": self.species,
            "mode": self.mode,
            "dims": self.dims,
            "color": list(self.color),
            "tag": self.tag,
            "has_collider": self.has_collider,
            "interactable": self.interactable,
            "synced_attributes": list(self.synced_attributes),
        }
        if self.filter is not None:
            d["filter"] = self.filter
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any], path: str = "spec") -> "SpeciesSyncSpec":
        if not isinstance(d, dict):
            raise ParseError(f"{path}: expected an object")
        try:
            spec = cls(
                species=d["species"],
                mode=d["mode"],
                dims=d.get("dims", "2d"),
                tag=d.get("tag", ""),
                has_collider=bool(d.get("has_collider", False)),
                interactable=bool(d.get("interactable", False)),
                synced_attributes=list(d.get("synced_attributes", [])),
                filter=d.get("filter"),
            )
        except KeyError as exc:
            raise ParseError(f"{path}: missing field {exc.args[0]!r}") from None
        color = d.get("color", [128, 128, 128])
        if not isinstance(color, (list, tuple)) or len(color) != 3:
            raise ParseError(f"{path}.color: must be [r, g, b]")
        spec.color = tuple(int(c) for c in color)
        spec.validate(path)
        return spec


@dataclass
class CouplingManifest:
    """Wizard output: everything the linker needs to couple one scenario."""

    scenario: str
    coupling_mode: str
    min_players: int = 0
    max_players: int = 1
    player_species: str = "player"
    species_specs: list[SpeciesSyncSpec] = field(default_factory=list)
    transform: SimTransform = field(default_factory=SimTransform)
    value_channels: list[str] = field(default_factory=list)
    step_period_ms: int = 100

    def per_step_specs(self) -> list[SpeciesSyncSpec]:
        return [s for s in self.species_specs if s.mode == "per_step"]

    def static_specs(self) -> list[SpeciesSyncSpec]:
        return [s for s in self.species_specs if s.mode == "static_init"]

    def validate(self, scenario_registry: dict[str, Any] | None = None):
        if not isinstance(self.min_players, int) or self.min_players < 0:
            raise ValidationError("min_players: must be a non-negative integer")
        if not isinstance(self.max_players, int) or self.max_players < max(self.min_players, 1):
            raise ValidationError(
                f"max_players: must be >= max(min_players, 1) = {max(self.min_players, 1)}"
            )
        if self.coupling_mode not in COUPLING_MODES:
            raise ValidationError(
                f"coupling_mode: {self.coupling_mode!r} not one of {COUPLING_MODES}"
            )
        if not isinstance(self.step_period_ms, int) or self.step_period_ms <= 0:
            raise ValidationError("step_period_ms: must be a positive integer")
        seen: set[tuple[str, str]] = set()
        for i, spec in enumerate(self.species_specs):
            path = f"species_specs[{i}]"
            spec.validate(path)
            key = (spec.species, spec.mode)
            if key in seen:
                raise ValidationError(f"{path}: duplicate spec for {key}")
            seen.add(key)
            if self.coupling_mode == "bijection" and spec.mode == "per_step" and spec.filter:
                raise ValidationError(f"{path}.filter: not allowed in bijection mode")
            if self.coupling_mode == "background" and spec.mode == "per_step":
                raise ValidationError(f"{path}.mode: per_step specs not allowed in background mode")
        if scenario_registry is not None:
            if self.scenario not in scenario_registry:
                raise ValidationError(
                    f"scenario: {self.scenario!r} unknown "
                    f"(available: {sorted(scenario_registry)})"
                )
            scn = scenario_registry[self.scenario]
            known = set(scn.SPECIES)
            if self.player_species not in known:
                raise ValidationError(
                    f"player_species: {self.player_species!r} not a {self.scenario} species"
                )
            for i, spec in enumerate(self.species_specs):
                if spec.species not in known:
                    raise ValidationError(
                        f"species_specs[{i}].species: {spec.species!r} "
                        f"not a {self.scenario} species"
                    )
                if spec.filter is not None:
                    from .linker import parse_filter

                    try:
                        parse_filter(spec.filter)
                    except ValueError as exc:
                        raise ValidationError(f"species_specs[{i}].filter: {exc}") from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "coupling_mode": self.coupling_mode,
            "min_players": self.min_players,
            "max_players": self.max_players,
            "player_species": self.player_species,
            "species_specs": [s.to_dict() for s in self.species_specs],
            "transform": self.transform.to_dict(),
            "value_channels": list(self.value_channels),
            "step_period_ms": self.step_period_ms,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CouplingManifest":
        if not isinstance(d, dict):
            raise ParseError("manifest: expected an object")
        try:
            specs = [
                SpeciesSyncSpec.from_dict(s, f"species_specs[{i}]")
                for i, s in enumerate(d.get("species_specs", []))
            ]
            manifest = cls(
                scenario=d["scenario"],
                coupling_mode=d["coupling_mode"],
                min_players=d.get("min_players", 0),
                max_players=d.get("max_players", 1),
                player_species=d.get("player_species", "player"),
                species_specs=specs,
                transform=SimTransform.from_dict(d["transform"]) if "transform" in d else SimTransform(),
                value_channels=list(d.get("value_channels", [])),
                step_period_ms=d.get("step_period_ms", 100),
            )
        except KeyError as exc:
            raise ParseError(f"manifest: missing field {exc.args[0]!r}") from None
        return manifest


def manifest_bytes(manifest: CouplingManifest) -> bytes:
    """Canonical file encoding: sorted keys, two-space indent, one trailing newline."""
    return (json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n").encode("utf-8")


def save_manifest(manifest: CouplingManifest, path: str):
    with open(path, "wb") as fh:
        fh.write(manifest_bytes(manifest))


def load_manifest(path: str, validate: bool = True) -> CouplingManifest:
    """Load and validate a manifest file.

    Species, filters, and the scenario name are resolved against the
    scenario registry; pass ``validate=False`` to skip that (wizard
    round-trip tooling only).
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read manifest: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest is not valid JSON: {exc}") from exc
    manifest = CouplingManifest.from_dict(doc)
    if validate:
        from .scenarios import registry

        manifest.validate(registry())
    return manifest
