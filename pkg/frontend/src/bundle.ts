/** Overlay bundle parsing: manifest validation plus raw layer decoding.
 *
 * A bundle is a manifest.json and one .bin per layer, little-endian float32
 * in x-fastest order, exactly nx*ny*nz*4 bytes. Validation here mirrors the
 * exporter's JSON schema so a bad bundle fails before any render.
 */

export type LayerKind = 'probability' | 'mask';

export interface LayerEntry {
  name: string;
  color: string;
  kind: LayerKind;
  file: string;
  value_range: [number, number];
}

export interface BundleManifest {
  format: 'exactct-overlay';
  version: 1;
  case_id: string;
  dims: [number, number, number];
  spacing: [number, number, number];
  layers: LayerEntry[];
}

export interface LoadedBundle {
  manifest: BundleManifest;
  /** decoded voxels per layer name, in manifest order */
  layers: Map<string, Float32Array>;
}

export class BundleError extends Error {}

const HEX_COLOR = /^#[0-9a-fA-F]{6}$/;

function fail(message: string): never {
  throw new BundleError(message);
}

function isTriple(value: unknown, positive: boolean): value is number[] {
  return (
    Array.isArray(value) &&
    value.length === 3 &&
    value.every((v) => typeof v === 'number' && Number.isFinite(v) && (!positive || v > 0))
  );
}

export function validateManifest(doc: unknown): BundleManifest {
  if (typeof doc !== 'object' || doc === null) fail('manifest is not an object');
  const m = doc as Record<string, unknown>;
  if (m.format !== 'exactct-overlay') fail(`bad format: ${String(m.format)}`);
  if (m.version !== 1) fail(`unsupported version: ${String(m.version)}`);
  if (typeof m.case_id !== 'string' || m.case_id.length === 0) fail('missing case_id');
  if (!isTriple(m.dims, true) || !(m.dims as number[]).every(Number.isInteger)) {
    fail('dims must be three positive integers');
  }
  if (!isTriple(m.spacing, true)) fail('spacing must be three positive numbers');
  if (!Array.isArray(m.layers) || m.layers.length === 0) fail('layers must be a non-empty array');
  const seen = new Set<string>();
  for (const raw of m.layers) {
    if (typeof raw !== 'object' || raw === null) fail('layer entry is not an object');
    const layer = raw as Record<string, unknown>;
    if (typeof layer.name !== 'string' || layer.name.length === 0) fail('layer missing name');
    if (seen.has(layer.name)) fail(`duplicate layer name: ${layer.name}`);
    seen.add(layer.name);
    if (typeof layer.color !== 'string' || !HEX_COLOR.test(layer.color)) {
      fail(`layer ${layer.name}: color must be #rrggbb`);
    }
    if (layer.kind !== 'probability' && layer.kind !== 'mask') {
      fail(`layer ${layer.name}: kind must be probability or mask`);
    }
    if (typeof layer.file !== 'string' || layer.file.length === 0) {
      fail(`layer ${layer.name}: missing file`);
    }
    const range = layer.value_range;
    if (!Array.isArray(range) || range.length !== 2 || !range.every((v) => typeof v === 'number')) {
      fail(`layer ${layer.name}: value_range must be [min, max]`);
    }
  }
  return doc as BundleManifest;
}

function decodeLayer(buffer: ArrayBuffer, voxels: number, name: string): Float32Array {
  if (buffer.byteLength !== voxels * 4) {
    fail(`layer ${name}: ${buffer.byteLength} bytes, expected ${voxels * 4}`);
  }
  const view = new DataView(buffer);
  const out = new Float32Array(voxels);
  for (let i = 0; i < voxels; i++) {
    out[i] = view.getFloat32(i * 4, true);
  }
  return out;
}

/** Parse and decode a whole bundle from in-memory files. */
export function loadBundle(manifestText: string, files: Map<string, ArrayBuffer>): LoadedBundle {
  let doc: unknown;
  try {
    doc = JSON.parse(manifestText);
  } catch {
    fail('manifest is not valid JSON');
  }
  const manifest = validateManifest(doc);
  const [nx, ny, nz] = manifest.dims;
  const voxels = nx * ny * nz;
  const layers = new Map<string, Float32Array>();
  for (const entry of manifest.layers) {
    const buffer = files.get(entry.file);
    if (buffer === undefined) fail(`layer file missing: ${entry.file}`);
    layers.set(entry.name, decodeLayer(buffer, voxels, entry.name));
  }
  return { manifest, layers };
}
