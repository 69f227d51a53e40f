"""Binary-mask machinery shared by the biomarker detectors.

Erosion/dilation/labelling are delegated to scipy.ndimage; the test suite
checks them against brute-force neighborhood and flood-fill oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grids import BinaryMask, CtVolume, GridMismatchError, ProbabilityVolume

__all__ = [
    "StructuringElement",
    "threshold_range",
    "erode",
    "dilate",
    "union_masks",
    "connected_components",
    "percentile_threshold",
]


@dataclass(frozen=True)
class StructuringElement:
    """Cube (Chebyshev ball) or cross (city-block ball) of a given radius."""

    shape: str = "cube"
    radius: int = 1

    def __post_init__(self):
        if self.shape not in ("cube", "cross"):
            raise ValueError(f"unknown structuring element shape {self.shape!r}")
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")

    def footprint(self) -> np.ndarray:
        r = self.radius
        if self.shape == "cube":
            return np.ones((2 * r + 1,) * 3, dtype=bool)
        ax = np.arange(-r, r + 1)
        dist = (np.abs(ax)[:, None, None] + np.abs(ax)[None, :, None]
                + np.abs(ax)[None, None, :])
        return dist <= r


def threshold_range(vol: CtVolume, lo: float, hi: float) -> BinaryMask:
    """Voxels with lo <= HU <= hi (closed interval on both ends)."""
    if lo > hi:
        raise ValueError(f"threshold lo ({lo}) exceeds hi ({hi})")
    inside = (vol.voxels >= lo) & (vol.voxels <= hi)
    return BinaryMask(inside, vol.spacing, vol.affine)


def erode(mask: BinaryMask, elem: StructuringElement, iters: int = 1) -> BinaryMask:
    """Minkowski erosion, iterated; out-of-bounds counts as background."""
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    if iters == 0:
        return mask
    out = ndimage.binary_erosion(
        mask.voxels, structure=elem.footprint(), iterations=iters, border_value=0
    )
    return mask.with_voxels(out)


def dilate(mask: BinaryMask, elem: StructuringElement, iters: int = 1) -> BinaryMask:
    """Minkowski dilation, iterated; growth past the volume border is clipped."""
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    if iters == 0:
        return mask
    out = ndimage.binary_dilation(
        mask.voxels, structure=elem.footprint(), iterations=iters, border_value=0
    )
    return mask.with_voxels(out)


def union_masks(masks: list[BinaryMask]) -> BinaryMask:
    """Voxelwise OR of grid-compatible masks."""
    if not masks:
        raise ValueError("union_masks needs at least one mask")
    first = masks[0]
    out = np.zeros(first.dims, dtype=bool)
    for m in masks:
        first.require_same_grid(m, "union operand")
        out |= m.voxels
    return first.with_voxels(out)


def connected_components(mask: BinaryMask, connectivity: int = 26):
    """Label connected foreground regions.

    Returns a list of (label, voxel_count, bounding_box) where bounding_box is
    ((x0, x1), (y0, y1), (z0, z1)) with exclusive upper bounds.
    """
    if connectivity == 6:
        structure = ndimage.generate_binary_structure(3, 1)
    elif connectivity == 26:
        structure = ndimage.generate_binary_structure(3, 3)
    else:
        raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")
    labels, n = ndimage.label(mask.voxels, structure=structure)
    if n == 0:
        return []
    counts = np.bincount(labels.ravel())[1:]
    slices = ndimage.find_objects(labels)
    out = []
    for lab in range(1, n + 1):
        sl = slices[lab - 1]
        bbox = tuple((s.start, s.stop) for s in sl)
        out.append((lab, int(counts[lab - 1]), bbox))
    return out


def percentile_threshold(prob, p: float, over: str = "all") -> float:
    """Nearest-rank percentile of a probability volume's voxel population.

    over='nonzero' restricts the population to strictly positive voxels.
    """
    if not 0 <= p <= 100:
        raise ValueError(f"percentile must be in [0, 100], got {p}")
    values = prob.voxels if isinstance(prob, ProbabilityVolume) else np.asarray(prob)
    values = values.ravel()
    if over == "nonzero":
        values = values[values > 0]
    elif over != "all":
        raise ValueError(f"over must be 'all' or 'nonzero', got {over!r}")
    if values.size == 0:
        raise ValueError(f"empty voxel population for percentile (over={over!r})")
    ordered = np.sort(values)
    rank = int(np.ceil(p / 100.0 * ordered.size)) - 1
    return float(ordered[max(rank, 0)])
