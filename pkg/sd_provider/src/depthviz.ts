/**
 * Dry-run imagery: a deterministic false-color rendering of the depth map.
 * Valid texels get a blue-to-warm ramp over the near/far range plus a subtle
 * seeded dither (so distinct seeds produce distinct bytes); misses stay black.
 */

import { GrayImage16, RgbImage } from "./png.js";

export const DEPTH_MISS = 65535;

/** Piecewise-linear cool-to-warm ramp over t in [0, 1]. */
function ramp(t: number): [number, number, number] {
  const stops: Array<[number, [number, number, number]]> = [
    [0.0, [40, 70, 220]],
    [0.35, [60, 200, 210]],
    [0.65, [230, 220, 70]],
    [1.0, [220, 60, 40]],
  ];
  for (let i = 1; i < stops.length; i++) {
    const [t1, c1] = stops[i];
    const [t0, c0] = stops[i - 1];
    if (t <= t1) {
      const f = (t - t0) / (t1 - t0);
      return [
        Math.round(c0[0] + f * (c1[0] - c0[0])),
        Math.round(c0[1] + f * (c1[1] - c0[1])),
        Math.round(c0[2] + f * (c1[2] - c0[2])),
      ];
    }
  }
  return stops[stops.length - 1][1];
}

function hash32(x: number): number {
  x = Math.imul(x ^ (x >>> 16), 0x45d9f3b);
  x = Math.imul(x ^ (x >>> 16), 0x45d9f3b);
  return (x ^ (x >>> 16)) >>> 0;
}

export function depthVisualization(depth: GrayImage16, seed: number): RgbImage {
  const { width, height, data } = depth;
  const out = new Uint8Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    const v = data[i];
    if (v === DEPTH_MISS) continue; // background stays black
    const [r, g, b] = ramp(v / 65534);
    const dither = (hash32(i ^ Math.imul(seed | 0, 2654435761)) & 7) - 3;
    out[i * 3] = Math.min(255, Math.max(0, r + dither));
    out[i * 3 + 1] = Math.min(255, Math.max(0, g + dither));
    out[i * 3 + 2] = Math.min(255, Math.max(0, b + dither));
  }
  return { width, height, data: out };
}
