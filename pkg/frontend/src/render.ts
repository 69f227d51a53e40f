/** Pure slice rasterization: windowed grayscale base plus colored overlays. */

import { LayerEntry } from './bundle.js';
import { MASK_OPACITY, ViewerState } from './state.js';

/** HU window map in float32 arithmetic: clamp((v - lo) / (hi - lo), 0, 1).
 *
 * Each intermediate rounds to float32 (Math.fround) so results bit-match the
 * exporter's float32 windowing.
 */
export function windowHu(value: number, lo: number, hi: number): number {
  const scaled = Math.fround(Math.fround(value - Math.fround(lo)) / Math.fround(hi - lo));
  return Math.min(Math.max(scaled, 0), 1);
}

export function hexToRgb(color: string): [number, number, number] {
  return [
    parseInt(color.slice(1, 3), 16),
    parseInt(color.slice(3, 5), 16),
    parseInt(color.slice(5, 7), 16),
  ];
}

function layerAlpha(entry: LayerEntry, value: number): number {
  if (entry.kind === 'mask') {
    return value > 0 ? MASK_OPACITY : 0;
  }
  return Math.min(Math.max(value, 0), 1);
}

/** Render the current axial slice to an RGBA raster (nx * ny * 4 bytes). */
export function renderSlice(state: ViewerState): Uint8ClampedArray {
  const { manifest, layers } = state.bundle;
  const [nx, ny] = manifest.dims;
  const sliceOffset = state.slice * nx * ny;
  const raster = new Uint8ClampedArray(nx * ny * 4);

  const base = layers.get('base');
  for (let y = 0; y < ny; y++) {
    for (let x = 0; x < nx; x++) {
      const p = (y * nx + x) * 4;
      let r = 0;
      let g = 0;
      let b = 0;
      if (base !== undefined) {
        // base layers arrive pre-windowed in [0, 1]; re-window against the
        // exporter's default so user windows stay meaningful in HU terms
        const hu =
          DEFAULT_EXPORT_WINDOW[0] +
          base[sliceOffset + y * nx + x] * (DEFAULT_EXPORT_WINDOW[1] - DEFAULT_EXPORT_WINDOW[0]);
        const gray = Math.round(windowHu(hu, state.windowLo, state.windowHi) * 255);
        r = gray;
        g = gray;
        b = gray;
      }
      raster[p] = r;
      raster[p + 1] = g;
      raster[p + 2] = b;
      raster[p + 3] = 255;
    }
  }

  for (const entry of manifest.layers) {
    if (entry.name === 'base' || !state.visible[entry.name]) continue;
    const data = layers.get(entry.name);
    if (data === undefined) continue;
    const [cr, cg, cb] = hexToRgb(entry.color);
    for (let y = 0; y < ny; y++) {
      for (let x = 0; x < nx; x++) {
        const a = layerAlpha(entry, data[sliceOffset + y * nx + x]);
        if (a === 0) continue;
        const p = (y * nx + x) * 4;
        raster[p] = Math.round(cr * a + raster[p] * (1 - a));
        raster[p + 1] = Math.round(cg * a + raster[p + 1] * (1 - a));
        raster[p + 2] = Math.round(cb * a + raster[p + 2] * (1 - a));
      }
    }
  }
  return raster;
}

/** The exporter windows the base layer with these HU bounds. */
export const DEFAULT_EXPORT_WINDOW: readonly [number, number] = [-150, 250];
