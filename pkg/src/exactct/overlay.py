"""Overlay bundles for the slice viewer.

A bundle is a manifest.json plus one raw binary file per layer: little-endian
float32, x-fastest (Fortran) order, exactly nx*ny*nz*4 bytes. Layers carry
the default palette: comb-sign red, fat yellow, calcified green, necrotic
blue. The manifest is validated against the shipped JSON schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .grids import BinaryMask, ProbabilityVolume

__all__ = ["OverlayLayer", "OverlayBundle", "write_bundle", "load_manifest",
           "LAYER_COLORS", "manifest_schema"]

LAYER_COLORS = {
    "base": "#ffffff",
    "comb_sign": "#ff0000",
    "fat": "#ffff00",
    "calcified": "#00ff00",
    "necrotic": "#0000ff",
}


def manifest_schema() -> dict:
    text = resources.files("exactct.schemas").joinpath(
        "overlay_manifest.schema.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class OverlayLayer:
    name: str
    kind: str              # "probability" | "mask"
    data: np.ndarray       # float32 volume
    color: str

    def __post_init__(self):
        if self.kind not in ("probability", "mask"):
            raise ValueError(f"layer kind must be probability or mask, got {self.kind!r}")


@dataclass(frozen=True)
class OverlayBundle:
    case_id: str
    dims: tuple
    spacing: tuple
    layers: tuple


def make_layer(name: str, vol, color: str | None = None) -> OverlayLayer:
    if isinstance(vol, BinaryMask):
        data = vol.voxels.astype(np.float32)
        kind = "mask"
    elif isinstance(vol, ProbabilityVolume):
        data = vol.voxels.astype(np.float32)
        kind = "probability"
    else:
        raise TypeError(f"cannot build a layer from {type(vol).__name__}")
    return OverlayLayer(name, kind, data, color or LAYER_COLORS.get(name, "#ff00ff"))


def write_bundle(bundle: OverlayBundle, out_dir) -> Path:
    """Write manifest.json plus one .bin per layer; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for layer in bundle.layers:
        if layer.data.shape != tuple(bundle.dims):
            raise ValueError(
                f"layer {layer.name} shape {layer.data.shape} does not match "
                f"bundle dims {bundle.dims}"
            )
        fname = f"{layer.name}.bin"
        payload = layer.data.astype("<f4").ravel(order="F").tobytes()
        (out_dir / fname).write_bytes(payload)
        entries.append({
            "name": layer.name,
            "color": layer.color,
            "kind": layer.kind,
            "file": fname,
            "value_range": [float(layer.data.min()), float(layer.data.max())],
        })
    manifest = {
        "format": "exactct-overlay",
        "version": 1,
        "case_id": bundle.case_id,
        "dims": [int(d) for d in bundle.dims],
        "spacing": [float(s) for s in bundle.spacing],
        "layers": entries,
    }
    jsonschema.validate(manifest, manifest_schema())
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_manifest(path) -> dict:
    """Read and schema-validate a bundle manifest; checks layer byte lengths."""
    path = Path(path)
    manifest = json.loads(path.read_text())
    jsonschema.validate(manifest, manifest_schema())
    nx, ny, nz = manifest["dims"]
    expected = nx * ny * nz * 4
    for layer in manifest["layers"]:
        f = path.parent / layer["file"]
        if not f.exists():
            raise FileNotFoundError(f"layer file missing: {f}")
        size = f.stat().st_size
        if size != expected:
            raise ValueError(
                f"layer {layer['name']}: {size} bytes, expected {expected}"
            )
    return manifest
