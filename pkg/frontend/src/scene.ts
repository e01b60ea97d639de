// Server-authoritative scene state. The store only mutates in response
// to received frames; local selection is a pure overlay and never fakes
// a road closure: a toggled road turns red only once a snapshot says so.

import type {
  Entity,
  Feature,
  Message,
  PhasePayload,
  Scalar,
  SimTransform,
  SpeciesSpec,
  WorldBounds,
} from "./protocol.js";
import { IDENTITY } from "./transform.js";

export type Rgb = [number, number, number];

export const ROAD_OPEN: Rgb = [20, 20, 20];
export const ROAD_CLOSED: Rgb = [200, 32, 32];
export const ROAD_SELECTED: Rgb = [40, 170, 60];

// One fill per pollution band, calm gray to alarming red.
export const BAND_PALETTE: Rgb[] = [
  [174, 182, 174],
  [196, 184, 120],
  [214, 158, 74],
  [208, 102, 48],
  [178, 40, 36],
];

export interface RenderConfig {
  asset: "box" | "marker" | "line" | "footprint";
  scale: number;
  rotation_offset_deg: number;
  color_override?: Rgb;
}

function defaultAsset(spec: SpeciesSpec): RenderConfig["asset"] {
  if (spec.tag === "road") return "line";
  if (spec.tag === "building") return "footprint";
  if (spec.tag === "player") return "marker";
  return "box";
}

export interface DebugLine {
  level: string;
  text: string;
}

export class SceneStore {
  bounds: WorldBounds | null = null;
  transform: SimTransform = IDENTITY;
  speciesSpecs = new Map<string, SpeciesSpec>();
  renderConfig = new Map<string, RenderConfig>();
  staticFeatures = new Map<string, Feature>(); // id -> feature
  entities = new Map<string, Entity>();
  prevEntities = new Map<string, Entity>(); // previous snapshot, for interpolation
  values: Record<string, Scalar> = {};
  phase: PhasePayload | null = null;
  phaseReceivedAt = 0;
  debugLog: DebugLine[] = [];
  playerId: string | null = null;
  step = -1;
  snapshotCount = 0;
  selectedId: string | null = null;
  interpolate = true;
  backgroundMode = false;

  apply(msg: Message, nowMs: number = Date.now()): void {
    switch (msg.kind) {
      case "world_init": {
        const p = msg.payload;
        this.bounds = p.world_bounds;
        this.transform = p.transform;
        this.playerId = p.player_id ?? null;
        this.speciesSpecs.clear();
        this.renderConfig.clear();
        this.staticFeatures.clear();
        this.entities.clear();
        this.prevEntities.clear();
        this.step = -1;
        for (const spec of p.species_defs) {
          if (!this.speciesSpecs.has(spec.species) || spec.mode === "per_step") {
            this.speciesSpecs.set(spec.species, spec);
          }
          if (!this.renderConfig.has(spec.species)) {
            this.renderConfig.set(spec.species, {
              asset: defaultAsset(spec),
              scale: 1,
              rotation_offset_deg: 0,
            });
          }
        }
        this.backgroundMode = !p.species_defs.some(
          (s) => s.mode === "per_step" && s.tag !== "player",
        );
        for (const feature of p.static_features) {
          this.staticFeatures.set(feature.id, feature);
        }
        if (p.phase) {
          this.phase = p.phase;
          this.phaseReceivedAt = nowMs;
        }
        break;
      }
      case "step_update": {
        const p = msg.payload;
        if (p.step <= this.step) return; // stale frame, discard
        this.step = p.step;
        this.snapshotCount += 1;
        this.prevEntities = this.entities;
        this.entities = new Map();
        for (const e of p.entities) this.entities.set(e.id, e);
        if (this.selectedId && !this.roadExists(this.selectedId)) {
          this.selectedId = null;
        }
        break;
      }
      case "value_update":
        Object.assign(this.values, msg.payload.values);
        break;
      case "phase":
        this.phase = msg.payload;
        this.phaseReceivedAt = nowMs;
        break;
      case "debug":
        this.debugLog.push({ level: msg.payload.level, text: msg.payload.text });
        if (this.debugLog.length > 200) this.debugLog.shift();
        break;
      default:
        break;
    }
  }

  roadExists(id: string): boolean {
    const f = this.staticFeatures.get(id);
    return f !== undefined && f.species === "road";
  }

  /** Authoritative attribute for a static feature: snapshot wins over init. */
  featureAttribute(id: string, name: string): Scalar | undefined {
    const entity = this.entities.get(id);
    if (entity && name in entity.attributes) return entity.attributes[name];
    const feature = this.staticFeatures.get(id);
    if (feature && name in feature.attributes) return feature.attributes[name];
    return undefined;
  }

  roadClosed(id: string): boolean {
    return this.featureAttribute(id, "closed") === true;
  }

  roadColor(id: string): Rgb {
    if (this.selectedId === id) return ROAD_SELECTED;
    return this.roadClosed(id) ? ROAD_CLOSED : ROAD_OPEN;
  }

  buildingColor(id: string): Rgb {
    const band = this.featureAttribute(id, "pollution_band");
    const index = typeof band === "number" ? Math.max(0, Math.min(4, Math.round(band))) : 0;
    return BAND_PALETTE[index];
  }

  score(): number | null {
    const v = this.values["score"];
    return typeof v === "number" ? v : null;
  }

  /** Display position, optionally interpolated between the last two snapshots. */
  displayLocation(id: string, blend: number): [number, number, number] | null {
    const current = this.entities.get(id);
    if (!current) return null;
    const prev = this.prevEntities.get(id);
    if (!this.interpolate || !prev) return current.location;
    const t = Math.max(0, Math.min(1, blend));
    return [
      prev.location[0] + (current.location[0] - prev.location[0]) * t,
      prev.location[1] + (current.location[1] - prev.location[1]) * t,
      prev.location[2] + (current.location[2] - prev.location[2]) * t,
    ];
  }

  /** Moving entities to draw as markers (snapshot ids without static geometry). */
  movingEntities(): Entity[] {
    const out: Entity[] = [];
    for (const e of this.entities.values()) {
      if (!this.staticFeatures.has(e.id)) out.push(e);
    }
    return out;
  }

  phaseRemainingS(nowMs: number): number | null {
    if (!this.phase || this.phase.duration_s == null) return null;
    const elapsed = (nowMs - this.phaseReceivedAt) / 1000;
    return Math.max(0, this.phase.duration_s - elapsed);
  }
}
