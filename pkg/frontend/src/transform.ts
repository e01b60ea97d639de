// Simulation <-> client space conversion. Simulation ground plane (x, y)
// maps to the client ground plane (x, z); simulation z maps to client y.

import type { SimTransform, Vec3 } from "./protocol.js";

export const IDENTITY: SimTransform = { scale: 1, offset: [0, 0, 0], flip_vertical_axis: false };

function sign(t: SimTransform): number {
  return t.flip_vertical_axis ? -1 : 1;
}

export function toClientPoint(p: Vec3, t: SimTransform): Vec3 {
  const qx = p[0] - t.offset[0];
  const qy = p[1] - t.offset[1];
  const qz = (p[2] ?? 0) - t.offset[2];
  return [qx * t.scale, qz * t.scale, sign(t) * qy * t.scale];
}

export function fromClientPoint(c: Vec3, t: SimTransform): Vec3 {
  return [
    c[0] / t.scale + t.offset[0],
    (sign(t) * c[2]) / t.scale + t.offset[1],
    c[1] / t.scale + t.offset[2],
  ];
}

export function normalizeDeg(angle: number): number {
  let a = angle % 360;
  if (a < 0) a += 360;
  return a === 360 ? 0 : a;
}

export function headingToYaw(headingDeg: number, t: SimTransform): number {
  return normalizeDeg(90 - sign(t) * headingDeg);
}

export function yawToHeading(yawDeg: number, t: SimTransform): number {
  return normalizeDeg(sign(t) * (90 - yawDeg));
}
