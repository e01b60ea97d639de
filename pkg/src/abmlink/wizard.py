"""Manifest wizard: builds a validated coupling manifest from choices.

Non-interactive use fills a scenario's default manifest and applies
flag overrides; interactive use walks the same choices as prompts
(player counts, coupling mode, per-species display and interaction
properties, transform) with the defaults prefilled, so accepting every
default reproduces the shipped manifest byte for byte.
"""

from __future__ import annotations

import dataclasses

import click

from .geometry import SimTransform
from .manifest import CouplingManifest, SpeciesSyncSpec, save_manifest
from .scenarios import get_scenario, registry


def _generic_spec(species: str, mode: str) -> SpeciesSyncSpec:
    return SpeciesSyncSpec(species=species, mode=mode, tag=species)


def build_manifest(
    scenario_name: str,
    mode: str | None = None,
    min_players: int | None = None,
    max_players: int | None = None,
    sync: tuple[str, ...] | None = None,
    static: tuple[str, ...] | None = None,
    step_period_ms: int | None = None,
    scale: float | None = None,
    flip_vertical_axis: bool | None = None,
) -> CouplingManifest:
    """Start from the scenario defaults and apply overrides.

    ``sync`` / ``static`` replace the per_step / static_init species
    lists; species without a default spec get a generic one. The result
    is validated against the scenario registry before being returned.
    """
    manifest = get_scenario(scenario_name).default_manifest()
    if mode is not None:
        manifest.coupling_mode = mode
    if min_players is not None:
        manifest.min_players = min_players
    if max_players is not None:
        manifest.max_players = max_players
    if step_period_ms is not None:
        manifest.step_period_ms = step_period_ms
    if scale is not None or flip_vertical_axis is not None:
        t = manifest.transform
        manifest.transform = SimTransform(
            scale=scale if scale is not None else t.scale,
            offset=t.offset,
            flip_vertical_axis=(
                flip_vertical_axis if flip_vertical_axis is not None else t.flip_vertical_axis
            ),
        )
    defaults = {(s.species, s.mode): s for s in manifest.species_specs}
    if sync is not None or static is not None:
        specs: list[SpeciesSyncSpec] = []
        static_list = (
            list(static)
            if static is not None
            else [s.species for s in manifest.species_specs if s.mode == "static_init"]
        )
        sync_list = (
            list(sync)
            if sync is not None
            else [s.species for s in manifest.species_specs if s.mode == "per_step"]
        )
        for species in static_list:
            specs.append(defaults.get((species, "static_init"), _generic_spec(species, "static_init")))
        for species in sync_list:
            specs.append(defaults.get((species, "per_step"), _generic_spec(species, "per_step")))
        manifest.species_specs = specs
    manifest.validate(registry())
    return manifest


def _prompt_spec(spec: SpeciesSyncSpec) -> SpeciesSyncSpec:
    click.echo(f"-- species {spec.species} ({spec.mode})")
    dims = click.prompt("   dims", default=spec.dims, type=click.Choice(["2d", "3d"]))
    color_text = click.prompt("   color r,g,b", default=",".join(str(c) for c in spec.color))
    color = tuple(int(c.strip()) for c in color_text.split(","))
    tag = click.prompt("   tag", default=spec.tag)
    has_collider = click.confirm("   collider?", default=spec.has_collider)
    interactable = click.confirm("   interactable?", default=spec.interactable)
    return dataclasses.replace(
        spec,
        dims=dims,
        color=color,
        tag=tag,
        has_collider=has_collider,
        interactable=interactable,
        synced_attributes=list(spec.synced_attributes),
    )


def interactive_manifest(scenario_name: str | None = None) -> CouplingManifest:
    """Walk every wizard choice as a prompt, defaults prefilled."""
    names = sorted(registry())
    scenario_name = scenario_name or click.prompt(
        "scenario", default=names[0], type=click.Choice(names)
    )
    manifest = get_scenario(scenario_name).default_manifest()
    manifest.coupling_mode = click.prompt(
        "coupling mode",
        default=manifest.coupling_mode,
        type=click.Choice(["bijection", "projection", "background"]),
    )
    manifest.min_players = click.prompt("min players", default=manifest.min_players, type=int)
    manifest.max_players = click.prompt("max players", default=manifest.max_players, type=int)
    manifest.step_period_ms = click.prompt(
        "step period (ms)", default=manifest.step_period_ms, type=int
    )
    t = manifest.transform
    scale = click.prompt("transform scale (client units per meter)", default=t.scale, type=float)
    flip = click.confirm("flip vertical axis?", default=t.flip_vertical_axis)
    manifest.transform = SimTransform(scale=scale, offset=t.offset, flip_vertical_axis=flip)
    manifest.species_specs = [_prompt_spec(s) for s in manifest.species_specs]
    manifest.validate(registry())
    return manifest


def summarize(manifest: CouplingManifest) -> str:
    lines = [
        f"scenario       {manifest.scenario}",
        f"coupling mode  {manifest.coupling_mode}",
        f"players        {manifest.min_players}..{manifest.max_players} ({manifest.player_species})",
        f"step period    {manifest.step_period_ms} ms",
        f"transform      scale {manifest.transform.scale}, flip {manifest.transform.flip_vertical_axis}",
        f"value channels {', '.join(manifest.value_channels) or '(none)'}",
    ]
    for s in manifest.species_specs:
        extra = f" sync={','.join(s.synced_attributes)}" if s.synced_attributes else ""
        flags = "".join(
            [
                "C" if s.has_collider else "-",
                "I" if s.interactable else "-",
            ]
        )
        lines.append(f"  {s.species:<12} {s.mode:<12} {s.dims} {flags}{extra}")
    return "\n".join(lines)


def write_manifest(manifest: CouplingManifest, out_path: str):
    manifest.validate(registry())
    save_manifest(manifest, out_path)
