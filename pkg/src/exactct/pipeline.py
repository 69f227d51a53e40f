"""End-to-end per-case orchestration: extraction, rendering, and synthetic
cohort generation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import synth
from .biomarkers import (
    CalcifiedParams,
    FatResult,
    FeatureVector,
    NecroticParams,
    assemble_features,
    comb_sign_map,
    derive_regions,
    detect_calcified,
    detect_necrotic,
    fat_ratio_volume,
    ptb_probability,
    region_aggregate,
)
from .config import PipelineConfig
from .grids import BinaryMask, CtVolume, ProbabilityVolume, window_hu
from .manifest import CaseManifest, LoadedCase, load_case
from .nifti import write_nifti
from .overlay import LAYER_COLORS, OverlayBundle, make_layer, write_bundle
from .vesselness import DistanceParams, RefineSchedule, VesselParams

__all__ = ["CaseFindings", "extract_case", "render_case", "synth_cohort"]


@dataclass(frozen=True)
class CaseFindings:
    """Everything the viewer bundle needs from one extraction run."""

    features: FeatureVector
    comb_map: ProbabilityVolume
    fat_layer: BinaryMask
    calcified_mask: BinaryMask
    necrotic_mask: BinaryMask
    fat_result: FatResult


def _vessel_params(cfg: PipelineConfig) -> VesselParams:
    v = cfg.vessel
    return VesselParams(v.scale_min_mm, v.scale_max_mm, v.scale_count,
                        v.alpha, v.beta, None, v.polarity)


def extract_case(case: LoadedCase | CaseManifest,
                 cfg: PipelineConfig = PipelineConfig()) -> CaseFindings:
    """Run all five biomarker extractors on one case."""
    if isinstance(case, CaseManifest):
        case = load_case(case)
    vol = case.volume
    regions = derive_regions(case.body, case.vertebrae)

    comb = comb_sign_map(
        vol, case.intestine,
        vessel_params=_vessel_params(cfg),
        refine_sched=RefineSchedule(cfg.refine.lambdas),
        dist_params=DistanceParams(cfg.distance.sigma_mm, cfg.distance.keep_percentile),
        seed=cfg.seed,
    )
    comb_left = region_aggregate(comb, regions["L3S1_left"])
    comb_right = region_aggregate(comb, regions["L3S1_right"])
    comb_center = region_aggregate(comb, regions["anterior_central"])

    fat = fat_ratio_volume(vol, regions["L4L5"], g=cfg.fat.rays)

    exclusion = list(case.organs) + list(case.vertebrae.values())
    calc_mask, calc_volume, _ = detect_calcified(
        vol, exclusion + [case.intestine],
        CalcifiedParams(cfg.calcified.h_calc, cfg.calcified.t_calc,
                        cfg.calcified.dilation_radius, None,
                        cfg.calcified.edge_margin),
    )
    necr_mask, necr_volume = detect_necrotic(
        vol, list(case.organs) + [case.intestine], case.visceral_fat,
        NecroticParams(cfg.necrotic.t_low, cfg.necrotic.t_high,
                       cfg.necrotic.erosion_iters, cfg.necrotic.dilation_radius),
    )

    logit = case.manifest.ptb_logit
    ptb = ptb_probability(logit) if logit is not None else 0.0

    features = assemble_features(
        case.manifest.case_id, comb_left, comb_right, comb_center, fat,
        ptb, calc_volume, necr_volume,
    )

    # fat overlay layer: the fat mask restricted to the L4-L5 slice band
    from .biomarkers import fat_mask as _fat_mask
    z0, z1 = regions["L4L5"].axial_range
    fat3d = _fat_mask(vol).voxels.copy()
    fat_layer = np.zeros_like(fat3d)
    fat_layer[:, :, z0:z1] = fat3d[:, :, z0:z1]

    return CaseFindings(
        features=features,
        comb_map=comb,
        fat_layer=BinaryMask(fat_layer, vol.spacing, vol.affine),
        calcified_mask=calc_mask,
        necrotic_mask=necr_mask,
        fat_result=fat,
    )


def render_case(case: LoadedCase | CaseManifest, cfg: PipelineConfig,
                out_dir) -> Path:
    """Extract and export the overlay bundle; absent findings yield absent layers."""
    if isinstance(case, CaseManifest):
        case = load_case(case)
    findings = extract_case(case, cfg)
    vol = case.volume

    layers = [make_layer("base", window_hu(vol, cfg.window.lo, cfg.window.hi))]
    layers.append(make_layer("comb_sign", findings.comb_map))
    layers.append(make_layer("fat", findings.fat_layer))
    if findings.calcified_mask.count() > 0:
        layers.append(make_layer("calcified", findings.calcified_mask))
    if findings.necrotic_mask.count() > 0:
        layers.append(make_layer("necrotic", findings.necrotic_mask))

    bundle = OverlayBundle(case.manifest.case_id, vol.dims, vol.spacing,
                           tuple(layers))
    return write_bundle(bundle, out_dir)


# ---------------------------------------------------------------------------
# Synthetic cohorts
# ---------------------------------------------------------------------------

SYNTH_DIMS = (80, 80, 48)
SYNTH_SPACING = (1.0, 1.0, 1.0)

# axial bands for the vertebra surrogates (z half-open)
VERTEBRA_BANDS = {"S1": (2, 8), "L5": (10, 16), "L4": (18, 24), "L3": (26, 32)}


def _case_phantom(rng: np.random.Generator, label: int):
    """One synthetic abdomen with a planted disease effect for positives.

    Positives (label 1) get a larger visceral-fat disk (raising the fat
    ratio by roughly +0.5) and a bright tube hugging the intestinal wall;
    negatives get a small disk and, usually, a tube far from the wall. A
    minority of negatives also carry a near-wall tube, so the comb features
    are informative but imperfect while the fat ratio separates cleanly.
    The visceral disk stays clear of the subcutaneous annulus so the polar
    scan's inner boundary is unaffected by the planted effect.
    """
    nx, ny, nz = SYNTH_DIMS
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    # anatomy jitter decorrelates background texture from the label so only
    # the planted effects carry signal
    body_r = 34.0 + rng.uniform(-1.0, 1.0)
    # subcutaneous fat reaches the skin so no thin bright shell is left to
    # masquerade as a tube in the vesselness response
    fat_in, fat_out = body_r - 5.0, body_r
    gut_x, gut_y = cx + 14.0, cy + rng.uniform(-3.0, 3.0)
    gut_r_out, gut_r_in = 6.0, 4.0

    visc_base = 5.0 if label == 0 else 14.0
    visc_r = visc_base + rng.uniform(-0.8, 0.8)
    visc_x, visc_y = cx - 10.0, cy + 2.0 + rng.uniform(-2.0, 2.0)

    if label == 1 or rng.random() < 0.3:
        tube_x = gut_x + gut_r_out + 2.0
        tube_y = gut_y + rng.uniform(-2.0, 2.0)
    else:
        # contralateral tube, far outside the distance-weight reach
        tube_x = cx - 24.0
        tube_y = cy + rng.uniform(-2.0, 2.0)

    prims = [
        {"kind": "cylinder", "center": (cx, cy, (nz - 1) / 2.0), "radius": body_r,
         "axis": 2, "half_length": nz, "fill": 40.0},
        {"kind": "annulus_slab", "center": (cx, cy, 0.0), "r_inner": fat_in,
         "r_outer": fat_out, "z_range": (0.0, nz), "fill": -80.0},
        {"kind": "cylinder", "center": (visc_x, visc_y, (nz - 1) / 2.0),
         "radius": visc_r, "axis": 2, "half_length": nz, "fill": -80.0},
        {"kind": "cylinder", "center": (gut_x, gut_y, (nz - 1) / 2.0),
         "radius": gut_r_out, "axis": 2, "half_length": nz, "fill": 80.0},
        {"kind": "cylinder", "center": (gut_x, gut_y, (nz - 1) / 2.0),
         "radius": gut_r_in, "axis": 2, "half_length": nz, "fill": 10.0},
        {"kind": "cylinder", "center": (tube_x, tube_y, (nz - 1) / 2.0),
         "radius": 1.5, "axis": 2, "half_length": 14.0, "fill": 400.0},
    ]
    for name, (z0, z1) in VERTEBRA_BANDS.items():
        prims.append({"kind": "box",
                      "center": (cx, cy - 24.0, (z0 + z1 - 1) / 2.0),
                      "size": (8.0, 8.0, float(z1 - z0)), "fill": 300.0})

    vol = synth.make_phantom(synth.PhantomSpec(SYNTH_DIMS, SYNTH_SPACING,
                                               tuple(prims)))
    vol = synth.add_noise(vol, float(rng.uniform(1.5, 3.0)),
                          int(rng.integers(2 ** 31)))

    X, Y, Z = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                          indexing="ij")
    masks = {}
    masks["body"] = (X - cx) ** 2 + (Y - cy) ** 2 <= body_r ** 2
    masks["intestine"] = (X - gut_x) ** 2 + (Y - gut_y) ** 2 <= gut_r_out ** 2
    masks["visceral_fat"] = (X - visc_x) ** 2 + (Y - visc_y) ** 2 <= visc_r ** 2
    masks["organ_liver"] = ((X - (cx - 12.0)) ** 2 + (Y - (cy - 12.0)) ** 2
                            + (Z - 38.0) ** 2) <= 6.0 ** 2
    for name, (z0, z1) in VERTEBRA_BANDS.items():
        masks[f"vertebra_{name}"] = ((np.abs(X - cx) <= 4.0)
                                     & (np.abs(Y - (cy - 24.0)) <= 4.0)
                                     & (Z >= z0) & (Z < z1))
    return vol, masks


def synth_cohort(n: int, seed: int, out_dir, positive_fraction: float = 0.5):
    """Emit n phantom cases (NIfTI + masks + manifests) and a labels CSV.

    Returns (manifest paths, labels csv path). Deterministic per seed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n_pos = int(round(n * positive_fraction))
    labels = [1] * n_pos + [0] * (n - n_pos)

    manifest_paths = []
    label_rows = []
    for i, label in enumerate(labels):
        case_id = f"case{i:03d}"
        case_dir = out_dir / case_id
        case_dir.mkdir(exist_ok=True)
        vol, masks = _case_phantom(rng, label)
        write_nifti(vol, case_dir / "ct.nii.gz")
        mask_doc = {}
        for name, arr in masks.items():
            path = case_dir / f"{name}.nii.gz"
            write_nifti(BinaryMask(arr, vol.spacing, vol.affine), path)
        # PTB logits: mildly informative toward ITB (label 0)
        ptb_logit = float(rng.normal(-4.0, 1.0) if label == 1
                          else rng.normal(-2.0, 2.0))
        doc = {
            "case_id": case_id,
            "ct": "ct.nii.gz",
            "masks": {
                "intestine": "intestine.nii.gz",
                "body": "body.nii.gz",
                "visceral_fat": "visceral_fat.nii.gz",
                "organs": ["organ_liver.nii.gz"],
                "vertebrae": {k: f"vertebra_{k}.nii.gz" for k in VERTEBRA_BANDS},
            },
            "ptb_logit": ptb_logit,
            "label": label,
        }
        mpath = case_dir / "manifest.json"
        mpath.write_text(json.dumps(doc, indent=2))
        manifest_paths.append(mpath)
        label_rows.append((case_id, label))

    from .cohort import write_labels_csv
    labels_path = out_dir / "labels.csv"
    write_labels_csv(label_rows, labels_path)
    return manifest_paths, labels_path
