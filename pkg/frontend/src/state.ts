/** Viewer state and its pure update operations.
 *
 * Every operation returns a fresh state; render is a pure function of state,
 * so identical states always produce identical rasters.
 */

import { BundleError, LoadedBundle } from './bundle.js';

export const DEFAULT_WINDOW: readonly [number, number] = [-150, 250];
export const MASK_OPACITY = 0.5;

export interface ViewerState {
  bundle: LoadedBundle;
  /** axial-only in v1; the field exists so axis switching can slot in */
  axis: 'axial';
  slice: number;
  windowLo: number;
  windowHi: number;
  visible: Record<string, boolean>;
}

/** Initial state: mid-volume axial slice, default window, all layers on. */
export function initState(bundle: LoadedBundle): ViewerState {
  const visible: Record<string, boolean> = {};
  for (const layer of bundle.manifest.layers) {
    visible[layer.name] = true;
  }
  return {
    bundle,
    axis: 'axial',
    slice: Math.floor(bundle.manifest.dims[2] / 2),
    windowLo: DEFAULT_WINDOW[0],
    windowHi: DEFAULT_WINDOW[1],
    visible,
  };
}

export function setWindow(state: ViewerState, lo: number, hi: number): ViewerState {
  if (!(lo < hi)) {
    throw new BundleError(`window lo (${lo}) must be below hi (${hi})`);
  }
  return { ...state, windowLo: lo, windowHi: hi };
}

export function toggleLayer(state: ViewerState, name: string, on?: boolean): ViewerState {
  if (!(name in state.visible)) {
    throw new BundleError(`no such layer: ${name}`);
  }
  const next = on === undefined ? !state.visible[name] : on;
  return { ...state, visible: { ...state.visible, [name]: next } };
}

export function scrollSlice(state: ViewerState, delta: number): ViewerState {
  const nz = state.bundle.manifest.dims[2];
  const slice = Math.min(Math.max(state.slice + Math.trunc(delta), 0), nz - 1);
  return slice === state.slice ? state : { ...state, slice };
}
