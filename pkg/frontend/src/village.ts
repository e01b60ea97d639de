// Background-coupling view helpers: the local scene's visual density is
// a pure function of the three received indicator values, so the same
// values always render the same village.

export interface VillageVisual {
  wasteMarkers: { x: number; y: number }[]; // unit square coordinates
  waterColor: [number, number, number];
  plantColor: [number, number, number];
}

function hash01(n: number): number {
  // Deterministic pseudo-positions; no RNG so re-renders are stable.
  let x = (n + 1) * 2654435761;
  x = (x ^ (x >>> 16)) >>> 0;
  return (x % 10000) / 10000;
}

function lerp(a: number, b: number, t: number): number {
  return a + (b - a) * t;
}

function mix(a: [number, number, number], b: [number, number, number], t: number): [number, number, number] {
  const tt = Math.max(0, Math.min(1, t));
  return [
    Math.round(lerp(a[0], b[0], tt)),
    Math.round(lerp(a[1], b[1], tt)),
    Math.round(lerp(a[2], b[2], tt)),
  ];
}

const CLEAR_WATER: [number, number, number] = [64, 140, 200];
const FOUL_WATER: [number, number, number] = [92, 96, 40];
const LUSH_PLANT: [number, number, number] = [56, 150, 60];
const DEAD_PLANT: [number, number, number] = [150, 130, 70];

export function villageVisual(
  solidPollution: number,
  waterPollution: number,
  production: number,
): VillageVisual {
  const markerCount = Math.round(Math.max(0, Math.min(100, solidPollution)));
  const wasteMarkers = [];
  for (let i = 0; i < markerCount; i++) {
    wasteMarkers.push({ x: hash01(i * 2), y: hash01(i * 2 + 1) });
  }
  return {
    wasteMarkers,
    waterColor: mix(CLEAR_WATER, FOUL_WATER, waterPollution / 100),
    plantColor: mix(DEAD_PLANT, LUSH_PLANT, production / 100),
  };
}
