"""The five radiological biomarkers and per-case feature assembly.

Conventions: volumes are indexed [x, y, z] with z the axial direction;
"left" means +x of the sagittal midline (RAS-style). Axial slice ranges are
half-open [z0, z1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grids import BinaryMask, CtVolume, ProbabilityVolume
from .gmm import wall_posterior
from .morphology import (
    StructuringElement,
    connected_components,
    dilate,
    erode,
    threshold_range,
    union_masks,
)
from .vesselness import (
    DistanceParams,
    RefineSchedule,
    VesselParams,
    frangi_response,
    refine_probability,
    wall_distance_weight,
)

__all__ = [
    "RegionSpec",
    "FatResult",
    "CalcifiedParams",
    "NecroticParams",
    "FeatureVector",
    "FEATURE_COLUMNS",
    "comb_sign_map",
    "region_aggregate",
    "derive_regions",
    "fat_mask",
    "polar_subcutaneous_area",
    "fat_ratio_volume",
    "detect_calcified",
    "detect_necrotic",
    "ptb_probability",
    "assemble_features",
]

FAT_HU_RANGE = (-500.0, -50.0)
BODY_HU_MIN = -500.0


@dataclass(frozen=True)
class RegionSpec:
    """Axial slice interval plus a lateral selection rule.

    lateral_rule: left-of-midline | right-of-midline | central-band | all.
    central-band restricts to the middle third of the body bounding box in
    both x and y.
    """

    name: str
    axial_range: tuple[int, int]
    lateral_rule: str = "all"
    midline_x: float | None = None
    band_x: tuple[int, int] | None = None
    band_y: tuple[int, int] | None = None

    def __post_init__(self):
        z0, z1 = self.axial_range
        if z1 <= z0:
            raise ValueError(f"axial_range must be nonempty, got {self.axial_range}")
        if self.lateral_rule not in ("left-of-midline", "right-of-midline",
                                     "central-band", "all"):
            raise ValueError(f"unknown lateral rule {self.lateral_rule!r}")

    def selector(self, dims) -> np.ndarray:
        nx, ny, nz = dims
        z0, z1 = self.axial_range
        if not (0 <= z0 < z1 <= nz):
            raise ValueError(f"axial_range {self.axial_range} outside volume depth {nz}")
        sel = np.zeros(dims, dtype=bool)
        sel[:, :, z0:z1] = True
        if self.lateral_rule in ("left-of-midline", "right-of-midline"):
            mid = self.midline_x if self.midline_x is not None else (nx - 1) / 2.0
            xs = np.arange(nx)
            lateral = xs > mid if self.lateral_rule == "left-of-midline" else xs < mid
            sel &= lateral[:, None, None]
        elif self.lateral_rule == "central-band":
            bx = self.band_x if self.band_x is not None else (nx // 3, nx - nx // 3)
            by = self.band_y if self.band_y is not None else (ny // 3, ny - ny // 3)
            band = np.zeros((nx, ny), dtype=bool)
            band[bx[0]:bx[1], by[0]:by[1]] = True
            sel &= band[:, :, None]
        return sel


def _z_extent(mask: BinaryMask) -> tuple[int, int]:
    zs = np.nonzero(mask.voxels.any(axis=(0, 1)))[0]
    if zs.size == 0:
        raise ValueError("vertebra mask is empty")
    return int(zs[0]), int(zs[-1]) + 1


def derive_regions(body: BinaryMask, vertebrae: dict) -> dict:
    """Standard regions from vertebra masks (keys L3, L4, L5, S1) and the body mask.

    The sagittal midline passes through the body-mask centroid; the central
    band is the middle third of the body bounding box.
    """
    idx = np.nonzero(body.voxels)
    if idx[0].size == 0:
        raise ValueError("body mask is empty")
    mid_x = float(idx[0].mean())
    x0, x1 = int(idx[0].min()), int(idx[0].max()) + 1
    y0, y1 = int(idx[1].min()), int(idx[1].max()) + 1
    third_x = (x0 + (x1 - x0) // 3, x1 - (x1 - x0) // 3)
    third_y = (y0 + (y1 - y0) // 3, y1 - (y1 - y0) // 3)

    l3 = _z_extent(vertebrae["L3"])
    s1 = _z_extent(vertebrae["S1"])
    l4 = _z_extent(vertebrae["L4"])
    l5 = _z_extent(vertebrae["L5"])
    l3s1 = (min(l3[0], s1[0]), max(l3[1], s1[1]))
    l4l5 = (min(l4[0], l5[0]), max(l4[1], l5[1]))

    return {
        "L3S1_left": RegionSpec("L3S1_left", l3s1, "left-of-midline", midline_x=mid_x),
        "L3S1_right": RegionSpec("L3S1_right", l3s1, "right-of-midline", midline_x=mid_x),
        "anterior_central": RegionSpec("anterior_central", l3s1, "central-band",
                                       band_x=third_x, band_y=third_y),
        "L4L5": RegionSpec("L4L5", l4l5, "all"),
    }


def comb_sign_map(vol: CtVolume, intestine: BinaryMask,
                  vessel_params: VesselParams = VesselParams(),
                  refine_sched: RefineSchedule = RefineSchedule(),
                  dist_params: DistanceParams = DistanceParams(),
                  seed: int = 0) -> ProbabilityVolume:
    """Voxelwise comb-sign probability: vessels times proximity to enhanced wall."""
    vol.require_same_grid(intestine, "intestine mask")
    vessels = refine_probability(frangi_response(vol, vessel_params), refine_sched)
    wall = wall_posterior(vol, intestine, seed=seed)
    return wall_distance_weight(vessels, wall, intestine, dist_params)


def region_aggregate(p: ProbabilityVolume, region: RegionSpec) -> tuple[float, float]:
    """(sum of probabilities, sum / voxel count) over the region."""
    sel = region.selector(p.dims)
    n = int(sel.sum())
    if n == 0:
        raise ValueError(f"region {region.name} selects no voxels")
    total = float(p.voxels[sel].sum(dtype=np.float64))
    return total, total / n


def fat_mask(vol: CtVolume) -> BinaryMask:
    """HU in [-500, -50], cleaned by two cycles of erosion then dilation."""
    mask = threshold_range(vol, *FAT_HU_RANGE)
    elem = StructuringElement("cube", 1)
    for _ in range(2):
        mask = dilate(erode(mask, elem, 1), elem, 1)
    return mask


def _bresenham_ray(cx: int, cy: int, ex: int, ey: int):
    """Integer Bresenham line from (cx, cy) towards (ex, ey), inclusive."""
    dx, dy = abs(ex - cx), abs(ey - cy)
    sx = 1 if ex >= cx else -1
    sy = 1 if ey >= cy else -1
    err = dx - dy
    x, y = cx, cy
    while True:
        yield x, y
        if x == ex and y == ey:
            return
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy


def polar_subcutaneous_area(slice_mask: np.ndarray, center: tuple[float, float],
                            g: int = 720) -> tuple[float, np.ndarray]:
    """Subcutaneous (outer-band) fat area of one axial slice by polar ray casting.

    For each of g rays the outer boundary d_out is the outermost fat pixel and
    d_in is where the contiguous outer fat band ends scanning inward (a run of
    at least two fat pixels is required before a transition counts). The area
    element is (d_out^2 - d_in^2) * dtheta / 2. Returns (area, table) where
    table[t] = (d_out, d_in) for ray t.
    """
    area, table, _ = _polar_scan(slice_mask, center, g)
    return area, table


def _polar_scan(slice_mask: np.ndarray, center: tuple[float, float], g: int):
    """Shared ray walk: sector-area estimate, (d_out, d_in) table, and the
    set of outer-band fat pixels hit by the rays (one contiguous run each)."""
    if g < 8:
        raise ValueError(f"need at least 8 rays, got {g}")
    mask = np.asarray(slice_mask, dtype=bool)
    nx, ny = mask.shape
    cx, cy = center
    icx, icy = int(round(cx)), int(round(cy))
    if not (0 <= icx < nx and 0 <= icy < ny):
        raise ValueError(f"center {center} outside slice of shape {mask.shape}")

    ray_len = int(math.ceil(math.hypot(nx, ny))) + 2
    dtheta = 2.0 * math.pi / g
    table = np.zeros((g, 2), dtype=np.float64)
    seeds = set()
    area = 0.0
    for t in range(g):
        theta = t * dtheta
        ex = int(round(icx + ray_len * math.cos(theta)))
        ey = int(round(icy + ray_len * math.sin(theta)))
        pixels = [(x, y) for x, y in _bresenham_ray(icx, icy, ex, ey)
                  if 0 <= x < nx and 0 <= y < ny]
        fat_flags = [mask[x, y] for x, y in pixels]
        if not any(fat_flags):
            continue
        outer_idx = max(i for i, f in enumerate(fat_flags) if f)
        d_out = math.hypot(pixels[outer_idx][0] - cx, pixels[outer_idx][1] - cy) + 0.5

        run = 0
        d_in = 0.0
        band_start = 0
        for i in range(outer_idx, -1, -1):
            if fat_flags[i]:
                run += 1
            else:
                if run >= 2:
                    last_fat = pixels[i + 1]
                    d_in = max(math.hypot(last_fat[0] - cx, last_fat[1] - cy) - 0.5, 0.0)
                    band_start = i + 1
                    break
                run = 0
        for i in range(band_start, outer_idx + 1):
            if fat_flags[i]:
                seeds.add(pixels[i])
        table[t] = (d_out, d_in)
        area += 0.5 * (d_out * d_out - d_in * d_in) * dtheta
    return area, table, seeds


def _subcut_pixel_count(fat2d: np.ndarray, seeds: set) -> float:
    """Pixels of every 8-connected fat component containing an outer-band seed."""
    if not seeds:
        return 0.0
    from scipy import ndimage
    labels, n = ndimage.label(fat2d, structure=np.ones((3, 3), dtype=int))
    hit = {labels[x, y] for x, y in seeds if labels[x, y] > 0}
    if not hit:
        return 0.0
    return float(np.isin(labels, sorted(hit)).sum())


@dataclass(frozen=True)
class FatResult:
    """Per-slice fat accounting and the volume-aggregate fat ratio."""

    fat_ratio: float
    per_slice_ratio: tuple
    per_slice_total: tuple
    per_slice_subcut: tuple
    degenerate_slices: tuple
    ray_tables: tuple = ()

    @property
    def fat_ratio_min(self) -> float:
        return min(self.per_slice_ratio) if self.per_slice_ratio else float("nan")

    @property
    def fat_ratio_max(self) -> float:
        return max(self.per_slice_ratio) if self.per_slice_ratio else float("nan")


def fat_ratio_volume(vol: CtVolume, region: RegionSpec, g: int = 720,
                     keep_ray_tables: bool = False) -> FatResult:
    """Visceral/subcutaneous fat ratio aggregated over an axial slice range.

    Per slice: A_total is the fat-mask pixel count; the polar scan about the
    body-mask centroid marks each ray's contiguous outer fat band, and
    A_subcut counts the fat pixels of every 2D component touched by a band,
    so a slice whose fat is all subcutaneous has A_subcut == A_total exactly.
    The aggregate ratio is sum(A_total) / sum(A_subcut) - 1; slices whose
    polar scan finds no subcutaneous band are excluded and flagged.
    """
    z0, z1 = region.axial_range
    if not (0 <= z0 < z1 <= vol.dims[2]):
        raise ValueError(f"axial range {region.axial_range} outside volume depth {vol.dims[2]}")
    mask3d = fat_mask(vol)

    totals, subcuts, ratios, degenerate, tables = [], [], [], [], []
    for z in range(z0, z1):
        fat2d = mask3d.voxels[:, :, z]
        body2d = vol.voxels[:, :, z] > BODY_HU_MIN
        a_total = float(fat2d.sum())
        if not body2d.any():
            degenerate.append(z)
            continue
        idx = np.nonzero(body2d)
        center = (float(idx[0].mean()), float(idx[1].mean()))
        _, table, seeds = _polar_scan(fat2d, center, g)
        a_subcut = _subcut_pixel_count(fat2d, seeds)
        if a_subcut <= 0:
            degenerate.append(z)
            continue
        totals.append(a_total)
        subcuts.append(a_subcut)
        ratios.append(a_total / a_subcut - 1.0)
        if keep_ray_tables:
            tables.append(table)

    if not subcuts:
        raise ValueError(f"no usable slices in axial range {region.axial_range}")
    aggregate = sum(totals) / sum(subcuts) - 1.0
    return FatResult(aggregate, tuple(ratios), tuple(totals), tuple(subcuts),
                     tuple(degenerate), tuple(tables))


@dataclass(frozen=True)
class CalcifiedParams:
    h_calc: float = 0.0
    t_calc: float = 130.0
    dilation_radius: int = 2
    abdominal_range: tuple[int, int] | None = None
    edge_margin: int = 2

    def __post_init__(self):
        if self.t_calc < 100.0:
            raise ValueError(f"t_calc must be >= 100 HU, got {self.t_calc}")


def detect_calcified(vol: CtVolume, organ_masks: list[BinaryMask],
                     params: CalcifiedParams = CalcifiedParams()):
    """Calcified-node candidates: bright voxels outside the dilated organ mask.

    Organ voxels are overwritten with h_calc before thresholding, so nothing
    inside the dilated mask can be flagged. Returns (mask, volume_mm3,
    component list).
    """
    merged = union_masks(organ_masks)
    vol.require_same_grid(merged, "organ mask")
    dilated = dilate(merged, StructuringElement("cube", params.dilation_radius), 1)

    overridden = vol.voxels.copy()
    overridden[dilated.voxels] = params.h_calc
    cand = overridden >= params.t_calc

    z0, z1 = params.abdominal_range if params.abdominal_range else (0, vol.dims[2])
    restricted = np.zeros_like(cand)
    restricted[:, :, z0:z1] = cand[:, :, z0:z1]
    m = params.edge_margin
    if m > 0:
        inner = np.zeros_like(restricted)
        inner[m:-m, m:-m, m:-m] = restricted[m:-m, m:-m, m:-m]
        restricted = inner

    mask = BinaryMask(restricted, vol.spacing, vol.affine)
    comps = connected_components(mask, 26)
    volume = mask.count() * vol.voxel_volume_mm3()
    return mask, volume, comps


@dataclass(frozen=True)
class NecroticParams:
    t_low: float = 0.0
    t_high: float = 30.0
    erosion_iters: int = 2
    dilation_radius: int = 2

    def __post_init__(self):
        if self.t_low > self.t_high:
            raise ValueError(f"t_low ({self.t_low}) exceeds t_high ({self.t_high})")


def detect_necrotic(vol: CtVolume, organ_masks: list[BinaryMask],
                    visceral_fat_mask: BinaryMask,
                    params: NecroticParams = NecroticParams()):
    """Fluid-attenuation proxy for necrotic nodes inside the peri-organ ROI.

    ROI = dilated organ union minus visceral fat; candidates in
    [t_low, t_high] HU are cleaned with erosion (noise) then dilation
    (recovery). Returns (mask, volume_mm3).
    """
    merged = union_masks(organ_masks)
    vol.require_same_grid(merged, "organ mask")
    vol.require_same_grid(visceral_fat_mask, "visceral fat mask")
    roi = dilate(merged, StructuringElement("cube", params.dilation_radius), 1)
    roi_vox = roi.voxels & ~visceral_fat_mask.voxels

    cand = threshold_range(vol, params.t_low, params.t_high).voxels & roi_vox
    mask = BinaryMask(cand, vol.spacing, vol.affine)
    elem = StructuringElement("cube", 1)
    mask = erode(mask, elem, params.erosion_iters)
    mask = dilate(mask, StructuringElement("cube", params.dilation_radius), 1)
    return mask, mask.count() * vol.voxel_volume_mm3()


def ptb_probability(z: float) -> float:
    """Logistic squash of an externally supplied pulmonary-TB logit."""
    if not math.isfinite(z):
        raise ValueError(f"PTB logit must be finite, got {z}")
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


FEATURE_COLUMNS = (
    "comb_left_sum", "comb_left_ratio", "comb_right_sum", "comb_right_ratio",
    "comb_center_sum", "comb_center_ratio", "fat_ratio", "fat_ratio_min",
    "fat_ratio_max", "ptb_prob", "calcified_volume", "necrotic_volume",
)


@dataclass(frozen=True)
class FeatureVector:
    """Canonical per-case biomarker vector in fixed column order."""

    case_id: str
    comb_left_sum: float
    comb_left_ratio: float
    comb_right_sum: float
    comb_right_ratio: float
    comb_center_sum: float
    comb_center_ratio: float
    fat_ratio: float
    fat_ratio_min: float
    fat_ratio_max: float
    ptb_prob: float
    calcified_volume: float
    necrotic_volume: float

    def __post_init__(self):
        for name in FEATURE_COLUMNS:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"feature {name} is not finite: {value}")
        if not 0.0 <= self.ptb_prob <= 1.0:
            raise ValueError(f"ptb_prob must lie in [0, 1], got {self.ptb_prob}")
        if self.calcified_volume < 0 or self.necrotic_volume < 0:
            raise ValueError("node volumes must be nonnegative")

    def values(self) -> np.ndarray:
        return np.array([getattr(self, c) for c in FEATURE_COLUMNS], dtype=np.float64)


def assemble_features(case_id: str, comb_left: tuple[float, float],
                      comb_right: tuple[float, float],
                      comb_center: tuple[float, float], fat: FatResult,
                      ptb_prob: float, calcified_volume: float,
                      necrotic_volume: float) -> FeatureVector:
    """Populate the canonical FeatureVector from the five extractor outputs."""
    return FeatureVector(
        case_id=case_id,
        comb_left_sum=comb_left[0], comb_left_ratio=comb_left[1],
        comb_right_sum=comb_right[0], comb_right_ratio=comb_right[1],
        comb_center_sum=comb_center[0], comb_center_ratio=comb_center[1],
        fat_ratio=fat.fat_ratio, fat_ratio_min=fat.fat_ratio_min,
        fat_ratio_max=fat.fat_ratio_max, ptb_prob=ptb_prob,
        calcified_volume=calcified_volume, necrotic_volume=necrotic_volume,
    )
