import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';

import { LoadedBundle, loadBundle } from '../src/bundle.js';

const HERE = dirname(fileURLToPath(import.meta.url));
export const FIXTURE_DIR = join(HERE, 'fixtures', 'bundle');

export function fixtureManifestText(): string {
  return readFileSync(join(FIXTURE_DIR, 'manifest.json'), 'utf-8');
}

export function fixtureFiles(): Map<string, ArrayBuffer> {
  const manifest = JSON.parse(fixtureManifestText()) as {
    layers: { file: string }[];
  };
  const files = new Map<string, ArrayBuffer>();
  for (const layer of manifest.layers) {
    const bytes = readFileSync(join(FIXTURE_DIR, layer.file));
    files.set(
      layer.file,
      bytes.buffer.slice(bytes.byteOffset, bytes.byteOffset + bytes.byteLength),
    );
  }
  return files;
}

export function fixtureBundle(): LoadedBundle {
  return loadBundle(fixtureManifestText(), fixtureFiles());
}
