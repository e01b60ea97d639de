// Canvas renderer: schematic 2.5D top-down scene. Roads are polylines
// colored by state, buildings extruded footprints filled by pollution
// band, moving entities simple markers, plus HUD, phase banner, and an
// optional debug overlay. Background sessions render indicator gauges
// and a procedural village instead of agents.

import type { Camera } from "./camera.js";
import type { SceneStore, Rgb } from "./scene.js";
import { toClientPoint } from "./transform.js";
import { villageVisual } from "./village.js";

// The subset of CanvasRenderingContext2D the renderer touches; tests
// substitute a recording fake.
export interface Ctx2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  globalAlpha: number;
  textAlign: CanvasTextAlign;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

export function rgb(c: Rgb, alpha = 1): string {
  return alpha >= 1 ? `rgb(${c[0]},${c[1]},${c[2]})` : `rgba(${c[0]},${c[1]},${c[2]},${alpha})`;
}

export interface RenderOptions {
  viewW: number;
  viewH: number;
  showDebug: boolean;
  blend: number; // snapshot interpolation position, 0..1
  nowMs: number;
}

export function renderFrame(ctx: Ctx2D, scene: SceneStore, camera: Camera, opts: RenderOptions): void {
  const { viewW, viewH } = opts;
  ctx.clearRect(0, 0, viewW, viewH);
  ctx.fillStyle = "#10131a";
  ctx.fillRect(0, 0, viewW, viewH);

  if (scene.backgroundMode) {
    renderVillage(ctx, scene, opts);
  } else {
    renderDistrict(ctx, scene, camera, opts);
  }
  renderHud(ctx, scene, opts);
  if (opts.showDebug) renderDebug(ctx, scene, opts);
}

function renderDistrict(ctx: Ctx2D, scene: SceneStore, camera: Camera, opts: RenderOptions): void {
  const { viewW, viewH } = opts;
  // Buildings under roads under entities.
  for (const feature of scene.staticFeatures.values()) {
    if (feature.shape.type !== "polygon") continue;
    const pts = feature.shape.coords.map(([x, y]) => camera.worldToScreen(x, y, viewW, viewH));
    ctx.beginPath();
    pts.forEach(([sx, sy], i) => (i === 0 ? ctx.moveTo(sx, sy) : ctx.lineTo(sx, sy)));
    ctx.closePath();
    ctx.fillStyle = rgb(scene.buildingColor(feature.id));
    ctx.fill();
    // Height hint: taller footprints get a heavier outline.
    ctx.strokeStyle = "rgba(0,0,0,0.55)";
    ctx.lineWidth = 1 + Math.min(3, feature.height_m / 8);
    ctx.stroke();
  }
  for (const feature of scene.staticFeatures.values()) {
    if (feature.shape.type !== "polyline") continue;
    const pts = feature.shape.coords.map(([x, y]) => camera.worldToScreen(x, y, viewW, viewH));
    ctx.beginPath();
    pts.forEach(([sx, sy], i) => (i === 0 ? ctx.moveTo(sx, sy) : ctx.lineTo(sx, sy)));
    ctx.strokeStyle = rgb(scene.roadColor(feature.id));
    ctx.lineWidth = Math.max(2, camera.zoom * 4);
    ctx.stroke();
  }
  for (const entity of scene.movingEntities()) {
    const loc = scene.displayLocation(entity.id, opts.blend) ?? entity.location;
    const [sx, sy] = camera.worldToScreen(loc[0], loc[1], viewW, viewH);
    const spec = scene.speciesSpecs.get(entity.species);
    const config = scene.renderConfig.get(entity.species);
    const color: Rgb = config?.color_override ?? spec?.color ?? [128, 128, 128];
    const size = Math.max(2, camera.zoom * 2.5) * (config?.scale ?? 1);
    ctx.fillStyle = rgb(color);
    if (config?.asset === "marker") {
      ctx.beginPath();
      ctx.arc(sx, sy, size, 0, Math.PI * 2);
      ctx.fill();
    } else {
      ctx.fillRect(sx - size / 2, sy - size / 2, size, size);
    }
  }
}

function renderVillage(ctx: Ctx2D, scene: SceneStore, opts: RenderOptions): void {
  const { viewW, viewH } = opts;
  const solid = numberValue(scene, "solid_pollution");
  const water = numberValue(scene, "water_pollution");
  const production = numberValue(scene, "production");
  const visual = villageVisual(solid, water, production);

  // Ground, river band, fields: tints follow the indicators.
  ctx.fillStyle = rgb(visual.plantColor, 0.5);
  ctx.fillRect(0, viewH * 0.2, viewW, viewH * 0.8);
  ctx.fillStyle = rgb(visual.waterColor);
  ctx.fillRect(0, viewH * 0.42, viewW, viewH * 0.14);
  ctx.fillStyle = "#c8b98a";
  for (const marker of visual.wasteMarkers) {
    ctx.fillRect(marker.x * viewW, viewH * 0.2 + marker.y * viewH * 0.76, 5, 5);
  }

  const gauges: [string, number][] = [
    ["solid pollution", solid],
    ["water pollution", water],
    ["production", production],
  ];
  gauges.forEach(([label, value], i) => {
    const y = 40 + i * 28;
    ctx.fillStyle = "rgba(255,255,255,0.15)";
    ctx.fillRect(16, y, 220, 16);
    ctx.fillStyle = i === 2 ? "rgb(76,175,80)" : "rgb(214,90,60)";
    ctx.fillRect(16, y, (220 * Math.max(0, Math.min(100, value))) / 100, 16);
    ctx.fillStyle = "#e8e8e8";
    ctx.font = "12px sans-serif";
    ctx.textAlign = "left";
    ctx.fillText(`${label}: ${value.toFixed(1)}`, 244, y + 12);
  });
}

function numberValue(scene: SceneStore, name: string): number {
  const v = scene.values[name];
  return typeof v === "number" ? v : 0;
}

function renderHud(ctx: Ctx2D, scene: SceneStore, opts: RenderOptions): void {
  ctx.font = "16px sans-serif";
  ctx.textAlign = "left";
  const score = scene.score();
  if (score !== null) {
    ctx.fillStyle = "#ffd75e";
    ctx.fillText(`score ${score}`, 16, 24);
  }
  if (scene.phase) {
    const remaining = scene.phaseRemainingS(opts.nowMs);
    const suffix = remaining !== null ? ` ${Math.ceil(remaining)}s` : "";
    ctx.fillStyle = "#9ad1ff";
    ctx.textAlign = "left";
    ctx.fillText(`phase: ${scene.phase.name}${suffix}`, 16, opts.viewH - 14);
  }
  ctx.fillStyle = "#6f7a8a";
  ctx.fillText(`step ${scene.step < 0 ? "-" : scene.step}`, opts.viewW - 110, 24);
}

function renderDebug(ctx: Ctx2D, scene: SceneStore, opts: RenderOptions): void {
  const lines = scene.debugLog.slice(-12);
  ctx.fillStyle = "rgba(0,0,0,0.6)";
  ctx.fillRect(0, 32, Math.min(560, opts.viewW), 16 * lines.length + 12);
  ctx.font = "12px monospace";
  ctx.textAlign = "left";
  lines.forEach((line, i) => {
    ctx.fillStyle = line.level === "error" ? "#ff7b72" : line.level === "warn" ? "#ffd75e" : "#9ad1ff";
    ctx.fillText(`[${line.level}] ${line.text}`, 8, 48 + i * 16);
  });
}

/** Client-space camera location for the player_state pose. */
export function cameraClientLocation(scene: SceneStore, camera: Camera): [number, number, number] {
  const sim: [number, number, number] = [camera.x, camera.y, camera.heightM];
  return toClientPoint(sim, scene.transform);
}
