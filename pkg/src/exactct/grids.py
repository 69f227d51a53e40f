"""Core grid-aligned volume types.

All volumes are stored as numpy arrays indexed [x, y, z] (x fastest when
flattened in Fortran order, matching the on-disk layout of NIfTI-1 and the
overlay bundle format). Instances are treated as immutable after
construction; the arrays are flagged non-writeable to enforce this.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CtVolume",
    "BinaryMask",
    "ProbabilityVolume",
    "GridMismatchError",
    "window_hu",
]


class GridMismatchError(ValueError):
    """Raised when two volumes do not share the same voxel grid."""


def _check_grid(dims, spacing, voxels):
    if len(dims) != 3 or any(int(d) <= 0 for d in dims):
        raise ValueError(f"dims must be three positive integers, got {dims}")
    if len(spacing) != 3 or any(s <= 0 for s in spacing):
        raise ValueError(f"spacing must be three positive values, got {spacing}")
    if voxels.shape != tuple(dims):
        raise ValueError(
            f"voxel array shape {voxels.shape} does not match dims {tuple(dims)}"
        )


def _default_affine(spacing):
    aff = np.eye(4)
    aff[0, 0], aff[1, 1], aff[2, 2] = spacing
    return aff


@dataclass(frozen=True)
class CtVolume:
    """A 3D scalar grid of Hounsfield Units."""

    voxels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    affine: np.ndarray = None

    def __post_init__(self):
        vox = np.asarray(self.voxels, dtype=np.float32)
        _check_grid(vox.shape, self.spacing, vox)
        if not np.isfinite(vox).all():
            raise ValueError("HU values must be finite")
        aff = self.affine
        if aff is None:
            aff = _default_affine(self.spacing)
        aff = np.asarray(aff, dtype=np.float64)
        if aff.shape != (4, 4):
            raise ValueError(f"affine must be 4x4, got {aff.shape}")
        vox.setflags(write=False)
        aff.setflags(write=False)
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "affine", aff)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape

    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def same_grid(self, other) -> bool:
        return self.dims == other.dims

    def require_same_grid(self, other, what="volume"):
        if not self.same_grid(other):
            raise GridMismatchError(
                f"{what} grid {other.dims} does not match {self.dims}"
            )


@dataclass(frozen=True)
class BinaryMask:
    """One bit per voxel on the same grid as its source volume."""

    voxels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    affine: np.ndarray = None

    def __post_init__(self):
        vox = np.asarray(self.voxels)
        vox = vox.astype(bool) if vox.dtype != bool else vox.copy()
        _check_grid(vox.shape, self.spacing, vox)
        aff = self.affine
        if aff is None:
            aff = _default_affine(self.spacing)
        aff = np.asarray(aff, dtype=np.float64)
        vox.setflags(write=False)
        aff.setflags(write=False)
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "affine", aff)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape

    def count(self) -> int:
        return int(self.voxels.sum())

    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def same_grid(self, other) -> bool:
        return self.dims == other.dims

    def require_same_grid(self, other, what="mask"):
        if not self.same_grid(other):
            raise GridMismatchError(
                f"{what} grid {other.dims} does not match {self.dims}"
            )

    def with_voxels(self, voxels) -> "BinaryMask":
        return BinaryMask(voxels, self.spacing, self.affine)


@dataclass(frozen=True)
class ProbabilityVolume:
    """Per-voxel values in [0, 1] on a CT grid."""

    voxels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    affine: np.ndarray = None

    def __post_init__(self):
        vox = np.asarray(self.voxels, dtype=np.float32)
        _check_grid(vox.shape, self.spacing, vox)
        if vox.size and (vox.min() < 0.0 or vox.max() > 1.0):
            raise ValueError(
                f"probability values must lie in [0, 1], "
                f"got range [{vox.min()}, {vox.max()}]"
            )
        aff = self.affine
        if aff is None:
            aff = _default_affine(self.spacing)
        aff = np.asarray(aff, dtype=np.float64)
        vox.setflags(write=False)
        aff.setflags(write=False)
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "affine", aff)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape

    def same_grid(self, other) -> bool:
        return self.dims == other.dims

    def require_same_grid(self, other, what="volume"):
        if not self.same_grid(other):
            raise GridMismatchError(
                f"{what} grid {other.dims} does not match {self.dims}"
            )

    def with_voxels(self, voxels) -> "ProbabilityVolume":
        return ProbabilityVolume(voxels, self.spacing, self.affine)


def window_hu(vol: CtVolume, lo: float, hi: float) -> ProbabilityVolume:
    """Map HU to [0, 1] with a linear window: clamp((HU - lo) / (hi - lo), 0, 1)."""
    if lo >= hi:
        raise ValueError(f"window lo ({lo}) must be below hi ({hi})")
    scaled = (vol.voxels - np.float32(lo)) / np.float32(hi - lo)
    return ProbabilityVolume(np.clip(scaled, 0.0, 1.0), vol.spacing, vol.affine)
