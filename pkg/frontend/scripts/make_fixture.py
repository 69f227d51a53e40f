"""Build the small phantom case and export its overlay bundle fixture.

Run from the repository root:
    python3 frontend/scripts/make_fixture.py
Regenerates frontend/tests/fixtures/bundle/ via the `exactct render` CLI so
the viewer tests exercise a real bundle without importing the Python package.
"""

import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from exactct.grids import BinaryMask
from exactct.nifti import write_nifti
from exactct.synth import PhantomSpec, make_phantom

DIMS = (40, 40, 24)
BANDS = {"S1": (1, 4), "L5": (5, 8), "L4": (9, 12), "L3": (13, 16)}


def build_case(case_dir: Path) -> Path:
    nx, ny, nz = DIMS
    cx = cy = (nx - 1) / 2.0
    gut_x, gut_y = cx + 6.0, cy
    prims = [
        {"kind": "cylinder", "center": (cx, cy, (nz - 1) / 2.0), "radius": 16.0,
         "axis": 2, "half_length": nz, "fill": 40.0},
        {"kind": "annulus_slab", "center": (cx, cy, 0.0), "r_inner": 12.0,
         "r_outer": 16.0, "z_range": (0.0, nz), "fill": -80.0},
        {"kind": "cylinder", "center": (gut_x, gut_y, (nz - 1) / 2.0),
         "radius": 4.0, "axis": 2, "half_length": nz, "fill": 80.0},
        {"kind": "cylinder", "center": (gut_x, gut_y, (nz - 1) / 2.0),
         "radius": 2.5, "axis": 2, "half_length": nz, "fill": 40.0},
        # dim peri-wall tube: enough for a comb layer, below the
        # calcification threshold so no node layers appear
        {"kind": "cylinder", "center": (gut_x + 5.5, gut_y, (nz - 1) / 2.0),
         "radius": 1.2, "axis": 2, "half_length": 8.0, "fill": 120.0},
    ]
    for z0, z1 in BANDS.values():
        prims.append({"kind": "box", "center": (cx, cy - 8.0, (z0 + z1 - 1) / 2.0),
                      "size": (4.0, 4.0, float(z1 - z0)), "fill": 300.0})
    vol = make_phantom(PhantomSpec(DIMS, (1.0, 1.0, 1.0), tuple(prims)))
    write_nifti(vol, case_dir / "ct.nii.gz")

    X, Y, Z = np.meshgrid(*[np.arange(d) for d in DIMS], indexing="ij")
    masks = {
        "body": (X - cx) ** 2 + (Y - cy) ** 2 <= 16.0 ** 2,
        "intestine": (X - gut_x) ** 2 + (Y - gut_y) ** 2 <= 16.0,
        "visceral_fat": np.zeros(DIMS, dtype=bool),
        "organ_liver": ((X - (cx - 6.0)) ** 2 + (Y - (cy - 4.0)) ** 2
                        + (Z - 18.0) ** 2) <= 9.0,
    }
    for name, (z0, z1) in BANDS.items():
        masks[f"vertebra_{name}"] = ((np.abs(X - cx) <= 2.0)
                                     & (np.abs(Y - (cy - 8.0)) <= 2.0)
                                     & (Z >= z0) & (Z < z1))
    for name, arr in masks.items():
        write_nifti(BinaryMask(arr, vol.spacing, vol.affine),
                    case_dir / f"{name}.nii.gz")

    manifest = {
        "case_id": "fixture",
        "ct": "ct.nii.gz",
        "masks": {
            "intestine": "intestine.nii.gz",
            "body": "body.nii.gz",
            "visceral_fat": "visceral_fat.nii.gz",
            "organs": ["organ_liver.nii.gz"],
            "vertebrae": {k: f"vertebra_{k}.nii.gz" for k in BANDS},
        },
        "ptb_logit": -3.0,
        "label": 1,
    }
    path = case_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def main() -> int:
    out = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "bundle"
    if out.exists():
        shutil.rmtree(out)
    with tempfile.TemporaryDirectory() as tmp:
        manifest = build_case(Path(tmp))
        subprocess.run(["exactct", "render", str(manifest),
                        "--out", str(out), "--set", "fat.rays=180"], check=True)
    doc = json.loads((out / "manifest.json").read_text())
    print("layers:", [layer["name"] for layer in doc["layers"]])
    return 0


if __name__ == "__main__":
    sys.exit(main())
