"""Per-case input manifests binding a CT volume to its mask files.

A manifest is a JSON document:
    {
      "case_id": "...",
      "ct": "case.nii.gz",
      "masks": {
        "intestine": "...", "body": "...", "visceral_fat": "...",
        "organs": ["...", ...],
        "vertebrae": {"L3": "...", "L4": "...", "L5": "...", "S1": "..."}
      },
      "ptb_logit": -2.0,        # optional
      "label": 1                # optional
    }
Paths are resolved relative to the manifest file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .grids import BinaryMask, CtVolume
from .nifti import read_nifti, read_nifti_mask

__all__ = ["CaseManifest", "LoadedCase", "load_case"]

REQUIRED_ROLES = ("intestine", "body", "visceral_fat")
VERTEBRA_KEYS = ("L3", "L4", "L5", "S1")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class CaseManifest:
    case_id: str
    ct_path: Path
    intestine: Path
    body: Path
    visceral_fat: Path
    organs: tuple
    vertebrae: dict
    ptb_logit: float | None = None
    label: int | None = None

    @classmethod
    def from_file(cls, path) -> "CaseManifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        root = path.parent

        def resolve(rel):
            return (root / rel).resolve()

        masks = doc.get("masks", {})
        for role in REQUIRED_ROLES:
            if role not in masks:
                raise ManifestError(f"{path}: missing mask role '{role}'")
        vertebrae = masks.get("vertebrae", {})
        for key in VERTEBRA_KEYS:
            if key not in vertebrae:
                raise ManifestError(f"{path}: missing vertebra mask '{key}'")
        if "ct" not in doc:
            raise ManifestError(f"{path}: missing 'ct' volume path")

        manifest = cls(
            case_id=doc.get("case_id", path.stem),
            ct_path=resolve(doc["ct"]),
            intestine=resolve(masks["intestine"]),
            body=resolve(masks["body"]),
            visceral_fat=resolve(masks["visceral_fat"]),
            organs=tuple(resolve(p) for p in masks.get("organs", [])),
            vertebrae={k: resolve(v) for k, v in vertebrae.items()},
            ptb_logit=doc.get("ptb_logit"),
            label=doc.get("label"),
        )
        for p in manifest.all_paths():
            if not p.exists():
                raise ManifestError(f"{path}: referenced file does not exist: {p}")
        return manifest

    def all_paths(self):
        yield self.ct_path
        yield self.intestine
        yield self.body
        yield self.visceral_fat
        yield from self.organs
        yield from self.vertebrae.values()


@dataclass(frozen=True)
class LoadedCase:
    manifest: CaseManifest
    volume: CtVolume
    intestine: BinaryMask
    body: BinaryMask
    visceral_fat: BinaryMask
    organs: tuple
    vertebrae: dict


def load_case(manifest: CaseManifest) -> LoadedCase:
    """Read the CT and every mask, enforcing grid compatibility."""
    vol = read_nifti(manifest.ct_path)

    def mask(p, what):
        m = read_nifti_mask(p)
        vol.require_same_grid(m, what)
        return m

    return LoadedCase(
        manifest=manifest,
        volume=vol,
        intestine=mask(manifest.intestine, "intestine mask"),
        body=mask(manifest.body, "body mask"),
        visceral_fat=mask(manifest.visceral_fat, "visceral fat mask"),
        organs=tuple(mask(p, "organ mask") for p in manifest.organs),
        vertebrae={k: mask(p, f"vertebra {k} mask")
                   for k, p in manifest.vertebrae.items()},
    )
