// Hit-testing and the select-then-confirm interaction. Only features
// with a collider are hit-testable; only interactable ones can be
// selected and toggled. Confirming sends toggle_road with the feature
// id; the authoritative color change arrives with a later snapshot.

import type { Feature, InvokeActionPayload } from "./protocol.js";
import type { SceneStore } from "./scene.js";

export function pointSegmentDistance(
  px: number, py: number, ax: number, ay: number, bx: number, by: number,
): number {
  const dx = bx - ax;
  const dy = by - ay;
  const denom = dx * dx + dy * dy;
  if (denom === 0) return Math.hypot(px - ax, py - ay);
  const t = Math.max(0, Math.min(1, ((px - ax) * dx + (py - ay) * dy) / denom));
  return Math.hypot(px - (ax + t * dx), py - (ay + t * dy));
}

export function pointInPolygon(px: number, py: number, coords: number[][]): boolean {
  let inside = false;
  for (let i = 0, j = coords.length - 1; i < coords.length; j = i++) {
    const [xi, yi] = coords[i];
    const [xj, yj] = coords[j];
    if (yi > py !== yj > py && px < ((xj - xi) * (py - yi)) / (yj - yi) + xi) {
      inside = !inside;
    }
  }
  return inside;
}

export function featureHit(feature: Feature, simX: number, simY: number, tolerance: number): boolean {
  const coords = feature.shape.coords;
  switch (feature.shape.type) {
    case "point":
      return Math.hypot(simX - coords[0][0], simY - coords[0][1]) <= tolerance;
    case "polyline": {
      for (let i = 0; i < coords.length - 1; i++) {
        const d = pointSegmentDistance(
          simX, simY, coords[i][0], coords[i][1], coords[i + 1][0], coords[i + 1][1],
        );
        if (d <= tolerance) return true;
      }
      return false;
    }
    case "polygon":
      return pointInPolygon(simX, simY, coords);
  }
}

/** First collider-bearing feature under a simulation-space point. */
export function hitTest(scene: SceneStore, simX: number, simY: number, tolerance = 6): Feature | null {
  let lineHit: Feature | null = null;
  let areaHit: Feature | null = null;
  for (const feature of scene.staticFeatures.values()) {
    if (!feature.has_collider) continue;
    if (!featureHit(feature, simX, simY, tolerance)) continue;
    if (feature.shape.type === "polygon") {
      areaHit = areaHit ?? feature;
    } else {
      lineHit = lineHit ?? feature;
    }
  }
  // Roads are thin: prefer them over the polygons they run between.
  return lineHit ?? areaHit;
}

export interface ClickOutcome {
  selected: string | null;
  action: InvokeActionPayload | null;
}

/** Select-then-confirm state machine over scene.selectedId. */
export class Interactor {
  private requestCounter = 0;
  pendingRequestId: string | null = null;
  lastError: string | null = null;

  constructor(private scene: SceneStore, private requestPrefix = "ui") {}

  click(simX: number, simY: number, tolerance = 6): ClickOutcome {
    const scene = this.scene;
    const hit = hitTest(scene, simX, simY, tolerance);
    if (hit === null || !hit.interactable) {
      // Colliders without interaction (buildings) absorb the click silently.
      return { selected: scene.selectedId, action: null };
    }
    if (scene.selectedId !== hit.id) {
      scene.selectedId = hit.id;
      return { selected: hit.id, action: null };
    }
    return { selected: hit.id, action: this.confirm() };
  }

  confirm(): InvokeActionPayload | null {
    const id = this.scene.selectedId;
    if (id === null) return null;
    this.requestCounter += 1;
    const requestId = `${this.requestPrefix}-${this.requestCounter}`;
    this.pendingRequestId = requestId;
    this.scene.selectedId = null;
    return { request_id: requestId, action: "toggle_road", args: [id] };
  }

  onActionResult(requestId: string, status: "ok" | "error", message?: string): void {
    if (requestId !== this.pendingRequestId) return;
    this.pendingRequestId = null;
    this.lastError = status === "error" ? (message ?? "action failed") : null;
    if (status === "error") this.scene.selectedId = null;
  }
}
