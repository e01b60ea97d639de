// Fly-over camera: pan, zoom, and rotation over the simulation ground
// plane, plus the pose reported back to the server as player_state.

import type { PlayerStatePayload, Vec3 } from "./protocol.js";
import { normalizeDeg } from "./transform.js";

export class Camera {
  // Center of view in simulation ground-plane meters.
  x = 0;
  y = 0;
  zoom = 1; // screen pixels per simulation meter
  rotationDeg = 0;
  heightM = 120; // fly-over altitude, reported in the pose

  fit(minX: number, minY: number, maxX: number, maxY: number, viewW: number, viewH: number): void {
    this.x = (minX + maxX) / 2;
    this.y = (minY + maxY) / 2;
    const spanX = Math.max(1, maxX - minX);
    const spanY = Math.max(1, maxY - minY);
    this.zoom = 0.9 * Math.min(viewW / spanX, viewH / spanY);
    this.rotationDeg = 0;
  }

  worldToScreen(wx: number, wy: number, viewW: number, viewH: number): [number, number] {
    const r = (-this.rotationDeg * Math.PI) / 180;
    const dx = wx - this.x;
    const dy = wy - this.y;
    const rx = dx * Math.cos(r) - dy * Math.sin(r);
    const ry = dx * Math.sin(r) + dy * Math.cos(r);
    // Screen y grows downward; world y grows north.
    return [viewW / 2 + rx * this.zoom, viewH / 2 - ry * this.zoom];
  }

  screenToWorld(sx: number, sy: number, viewW: number, viewH: number): [number, number] {
    const rx = (sx - viewW / 2) / this.zoom;
    const ry = -(sy - viewH / 2) / this.zoom;
    const r = (this.rotationDeg * Math.PI) / 180;
    return [
      this.x + rx * Math.cos(r) - ry * Math.sin(r),
      this.y + rx * Math.sin(r) + ry * Math.cos(r),
    ];
  }

  panScreen(dxPx: number, dyPx: number): void {
    const r = (this.rotationDeg * Math.PI) / 180;
    const dx = -dxPx / this.zoom;
    const dy = dyPx / this.zoom;
    this.x += dx * Math.cos(r) - dy * Math.sin(r);
    this.y += dx * Math.sin(r) + dy * Math.cos(r);
  }

  zoomAt(factor: number, sx: number, sy: number, viewW: number, viewH: number): void {
    const [wx, wy] = this.screenToWorld(sx, sy, viewW, viewH);
    this.zoom = Math.max(0.05, Math.min(80, this.zoom * factor));
    // Keep the point under the cursor fixed.
    const [nx, ny] = this.screenToWorld(sx, sy, viewW, viewH);
    this.x += wx - nx;
    this.y += wy - ny;
  }

  rotate(deltaDeg: number): void {
    this.rotationDeg = normalizeDeg(this.rotationDeg + deltaDeg);
  }

  /**
   * Camera pose as a player_state payload. The pose lives in client
   * space: the ground-plane center maps through the world transform by
   * the caller; yaw follows the view rotation, pitch is the fixed
   * fly-over tilt.
   */
  pose(clientLocation: Vec3): PlayerStatePayload {
    return {
      location: clientLocation,
      yaw_deg: normalizeDeg(90 - this.rotationDeg),
      pitch_deg: -60,
    };
  }
}
