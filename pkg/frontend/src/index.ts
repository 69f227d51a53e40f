export {
  BundleError,
  loadBundle,
  validateManifest,
  type BundleManifest,
  type LayerEntry,
  type LayerKind,
  type LoadedBundle,
} from './bundle.js';
export {
  DEFAULT_WINDOW,
  MASK_OPACITY,
  initState,
  scrollSlice,
  setWindow,
  toggleLayer,
  type ViewerState,
} from './state.js';
export { DEFAULT_EXPORT_WINDOW, hexToRgb, renderSlice, windowHu } from './render.js';
