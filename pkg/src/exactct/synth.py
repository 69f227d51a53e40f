"""Analytic CT phantoms and the geometric/intensity augmentation stack.

Phantom geometry is defined in millimetres; voxel i sits at i * spacing.
All spatial transforms are backward warps with trilinear sampling and an
air fill of -1000 HU outside the field of view. Every randomized operation
is a pure function of (input, parameters, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grids import CtVolume

__all__ = [
    "PhantomSpec",
    "AugmentSpec",
    "make_phantom",
    "rotate_rigid",
    "scale_uniform",
    "elastic_deform",
    "add_noise",
    "translate",
    "random_translate",
    "compose_augment",
]

AIR_HU = -1000.0


@dataclass(frozen=True)
class PhantomSpec:
    """Declarative phantom: primitives later in the list overwrite earlier ones.

    Each primitive is a dict with a "kind" key:
      sphere:       center (mm), radius (mm), fill (HU)
      cylinder:     center (mm), radius (mm), axis (0|1|2), half_length (mm), fill
      annulus_slab: center (mm), r_inner, r_outer (mm), z_range (mm, mm), fill
      box:          center (mm), size (mm triple), fill
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    primitives: tuple = ()
    background: float = AIR_HU


def _coord_grids(dims, spacing):
    axes = [np.arange(dims[i], dtype=np.float64) * spacing[i] for i in range(3)]
    return np.meshgrid(*axes, indexing="ij")


def make_phantom(spec: PhantomSpec) -> CtVolume:
    """Rasterize a PhantomSpec; a voxel takes the fill of the last primitive containing its center."""
    X, Y, Z = _coord_grids(spec.dims, spec.spacing)
    vol = np.full(spec.dims, spec.background, dtype=np.float32)
    for prim in spec.primitives:
        kind = prim["kind"]
        if kind not in ("sphere", "cylinder", "annulus_slab", "box"):
            raise ValueError(f"unknown primitive kind {kind!r}")
        cx, cy, cz = prim["center"]
        fill = np.float32(prim["fill"])
        if kind == "sphere":
            r = prim["radius"]
            inside = (X - cx) ** 2 + (Y - cy) ** 2 + (Z - cz) ** 2 <= r * r
        elif kind == "cylinder":
            r, axis, hl = prim["radius"], prim["axis"], prim["half_length"]
            coords = [X - cx, Y - cy, Z - cz]
            along = coords.pop(axis)
            inside = (coords[0] ** 2 + coords[1] ** 2 <= r * r) & (np.abs(along) <= hl)
        elif kind == "annulus_slab":
            ri, ro = prim["r_inner"], prim["r_outer"]
            z0, z1 = prim["z_range"]
            rad2 = (X - cx) ** 2 + (Y - cy) ** 2
            inside = (rad2 >= ri * ri) & (rad2 <= ro * ro) & (Z >= z0) & (Z <= z1)
        elif kind == "box":
            sx, sy, sz = prim["size"]
            inside = ((np.abs(X - cx) <= sx / 2) & (np.abs(Y - cy) <= sy / 2)
                      & (np.abs(Z - cz) <= sz / 2))
        else:
            raise ValueError(f"unknown primitive kind {kind!r}")
        vol[inside] = fill
    return CtVolume(vol, spec.spacing)


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(b):
    c, s = np.cos(b), np.sin(b)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rot_z(g):
    c, s = np.cos(g), np.sin(g)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def rotation_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Extrinsic x-y-z rotation: Rz(gamma) @ Ry(beta) @ Rx(alpha)."""
    return _rot_z(gamma) @ _rot_y(beta) @ _rot_x(alpha)


def _volume_center_mm(vol: CtVolume) -> np.ndarray:
    return np.array([(d - 1) * s / 2.0 for d, s in zip(vol.dims, vol.spacing)])


def _resample_at_mm(vol: CtVolume, points_mm) -> np.ndarray:
    """Trilinear sample at mm positions (3, ...); outside the grid -> air."""
    spacing = np.asarray(vol.spacing)
    idx = np.stack([points_mm[i] / spacing[i] for i in range(3)])
    # Snap to the lattice when within rounding noise so that lattice-preserving
    # motions (90-degree rotations, integer shifts) need no interpolation.
    snapped = np.round(idx)
    idx = np.where(np.abs(idx - snapped) < 1e-6, snapped, idx)
    return ndimage.map_coordinates(
        vol.voxels.astype(np.float64), idx, order=1,
        mode="constant", cval=AIR_HU,
    ).astype(np.float32)


def _warp_by_matrix(vol: CtVolume, mat: np.ndarray, center_mm) -> CtVolume:
    """Output voxel x samples the input at mat @ (x - c) + c."""
    X, Y, Z = _coord_grids(vol.dims, vol.spacing)
    pts = np.stack([X, Y, Z]) - np.asarray(center_mm).reshape(3, 1, 1, 1)
    src = np.einsum("ij,j...->i...", mat, pts) + np.asarray(center_mm).reshape(3, 1, 1, 1)
    return CtVolume(_resample_at_mm(vol, src), vol.spacing, vol.affine)


def rotate_rigid(vol: CtVolume, alpha: float, beta: float, gamma: float,
                 center_mm=None) -> CtVolume:
    """Rigid rotation about the volume center (or a given mm center)."""
    if alpha == 0.0 and beta == 0.0 and gamma == 0.0:
        return vol
    c = _volume_center_mm(vol) if center_mm is None else np.asarray(center_mm)
    R = rotation_matrix(alpha, beta, gamma)
    return _warp_by_matrix(vol, R.T, c)  # backward warp uses R^-1 = R^T


def scale_uniform(vol: CtVolume, s: float, center_mm=None) -> CtVolume:
    """Uniform scaling about a center; s > 0."""
    if s <= 0:
        raise ValueError(f"scale factor must be positive, got {s}")
    if s == 1.0:
        return vol
    c = _volume_center_mm(vol) if center_mm is None else np.asarray(center_mm)
    return _warp_by_matrix(vol, np.eye(3) / s, c)


_BSPLINE_COEFFS = None


def _cubic_bspline_weights(t):
    """The four cubic B-spline basis values at local coordinate t in [0, 1]."""
    t2, t3 = t * t, t * t * t
    b0 = (1 - t) ** 3 / 6.0
    b1 = (3 * t3 - 6 * t2 + 4) / 6.0
    b2 = (-3 * t3 + 3 * t2 + 3 * t + 1) / 6.0
    b3 = t3 / 6.0
    return b0, b1, b2, b3


def elastic_deform(vol: CtVolume, control: np.ndarray) -> CtVolume:
    """Cubic B-spline free-form deformation.

    control has shape (ncx, ncy, ncz, 3): a displacement vector in mm per
    control point. The grid spans the volume with spacing extent/(nc-3) per
    axis, so >= 4 control points per axis are required. The output voxel at x
    samples the input at x - u(x) (backward warp).
    """
    control = np.asarray(control, dtype=np.float64)
    if control.ndim != 4 or control.shape[3] != 3:
        raise ValueError(f"control grid must have shape (nx, ny, nz, 3), got {control.shape}")
    nc = control.shape[:3]
    if any(n < 4 for n in nc):
        raise ValueError(f"need >= 4 control points per axis, got {nc}")

    dims, spacing = vol.dims, np.asarray(vol.spacing)
    extent = (np.asarray(dims) - 1) * spacing
    delta = np.where(extent > 0, extent / (np.asarray(nc) - 3), 1.0)

    # Per-axis cell index and local coordinate for every voxel position.
    axes_base, axes_t = [], []
    for ax in range(3):
        pos = np.arange(dims[ax]) * spacing[ax]
        sidx = pos / delta[ax]
        base = np.minimum(np.floor(sidx).astype(int), nc[ax] - 4)
        axes_base.append(base)
        axes_t.append(sidx - base)

    wx = np.stack(_cubic_bspline_weights(axes_t[0]))   # (4, nx)
    wy = np.stack(_cubic_bspline_weights(axes_t[1]))
    wz = np.stack(_cubic_bspline_weights(axes_t[2]))

    u = np.zeros(dims + (3,), dtype=np.float64)
    bx, by, bz = axes_base
    for i in range(4):
        cxi = bx + i
        for j in range(4):
            cyj = by + j
            wij = wx[i][:, None] * wy[j][None, :]
            for k in range(4):
                phi = control[np.ix_(cxi, cyj, bz + k)]       # (nx, ny, nz, 3)
                w = wij[:, :, None] * wz[k][None, None, :]
                u += phi * w[..., None]

    X, Y, Z = _coord_grids(dims, vol.spacing)
    src = np.stack([X, Y, Z]) - np.moveaxis(u, -1, 0)
    return CtVolume(_resample_at_mm(vol, src), vol.spacing, vol.affine)


def add_noise(vol: CtVolume, sigma: float, seed: int) -> CtVolume:
    """Add zero-mean Gaussian HU noise; deterministic per seed."""
    if sigma < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return vol
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=vol.dims)
    return CtVolume(vol.voxels + noise.astype(np.float32), vol.spacing, vol.affine)


def translate(vol: CtVolume, delta_mm) -> CtVolume:
    """Shift content by delta_mm (backward-warped trilinear, air fill)."""
    delta = np.asarray(delta_mm, dtype=np.float64)
    if np.all(delta == 0):
        return vol
    X, Y, Z = _coord_grids(vol.dims, vol.spacing)
    src = np.stack([X, Y, Z]) - delta.reshape(3, 1, 1, 1)
    return CtVolume(_resample_at_mm(vol, src), vol.spacing, vol.affine)


def random_translate(vol: CtVolume, max_shift_mm: float, seed: int) -> CtVolume:
    """Translate by a per-axis uniform draw from [-max_shift, max_shift] mm."""
    if max_shift_mm < 0:
        raise ValueError(f"max_shift must be >= 0, got {max_shift_mm}")
    if max_shift_mm == 0.0:
        return vol
    rng = np.random.default_rng(seed)
    delta = rng.uniform(-max_shift_mm, max_shift_mm, size=3)
    return translate(vol, delta)


@dataclass(frozen=True)
class AugmentSpec:
    """Full augmentation: rotation -> scaling -> elastic -> translation -> noise."""

    angles: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: float = 1.0
    scale_center_mm: tuple | None = None
    control: np.ndarray | None = None
    max_shift_mm: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


def compose_augment(vol: CtVolume, spec: AugmentSpec) -> CtVolume:
    """Apply the augmentation stack in its fixed order; deterministic per seed."""
    out = rotate_rigid(vol, *spec.angles)
    out = scale_uniform(out, spec.scale, spec.scale_center_mm)
    if spec.control is not None:
        out = elastic_deform(out, spec.control)
    out = random_translate(out, spec.max_shift_mm, spec.seed)
    out = add_noise(out, spec.noise_sigma, spec.seed + 1)
    return out
