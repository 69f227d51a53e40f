"""Minimal NIfTI-1 reader/writer.

Supports .nii and .nii.gz, single-file ("n+1") and the legacy "ni1" magic,
both endiannesses on read (detected from the sizeof_hdr field), and the
datatypes used in this pipeline: uint8, int16, float32, float64. Writes are
always little-endian single-file NIfTI-1.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .grids import BinaryMask, CtVolume, ProbabilityVolume

__all__ = [
    "NiftiParseError",
    "UnsupportedDatatypeError",
    "read_nifti",
    "read_nifti_mask",
    "write_nifti",
]

HEADER_SIZE = 348

# NIfTI-1 datatype codes we accept.
_DTYPES = {
    2: np.uint8,
    4: np.int16,
    16: np.float32,
    64: np.float64,
}
_DTYPE_CODES = {np.dtype(np.uint8): 2, np.dtype(np.int16): 4,
                np.dtype(np.float32): 16, np.dtype(np.float64): 64}


class NiftiParseError(ValueError):
    """Malformed NIfTI-1 file; the message names the offending field."""


class UnsupportedDatatypeError(NiftiParseError):
    """Datatype code outside the supported set."""


def _is_gzip(raw: bytes) -> bool:
    return raw[:2] == b"\x1f\x8b"


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if _is_gzip(raw):
        raw = gzip.decompress(raw)
    return raw


def read_nifti(path) -> CtVolume:
    """Read a NIfTI-1 volume; voxels come back as float32 HU with scaling applied."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such NIfTI file: {path}")
    raw = _read_bytes(path)
    if len(raw) < HEADER_SIZE:
        raise NiftiParseError(
            f"{path}: file shorter than the {HEADER_SIZE}-byte NIfTI-1 header"
        )

    # Endianness: sizeof_hdr must decode to 348 in exactly one byte order.
    (sz_le,) = struct.unpack_from("<i", raw, 0)
    (sz_be,) = struct.unpack_from(">i", raw, 0)
    if sz_le == HEADER_SIZE:
        bo = "<"
    elif sz_be == HEADER_SIZE:
        bo = ">"
    else:
        raise NiftiParseError(
            f"{path}: sizeof_hdr is {sz_le} (LE) / {sz_be} (BE), expected 348"
        )

    magic = raw[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise NiftiParseError(f"{path}: bad magic {magic!r}, expected 'n+1' or 'ni1'")

    dim = struct.unpack_from(bo + "8h", raw, 40)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise NiftiParseError(f"{path}: dim[0] = {ndim} outside 1..7")
    shape = [max(1, d) for d in dim[1:4]]
    if any(d <= 0 for d in dim[1:1 + min(ndim, 3)]):
        raise NiftiParseError(f"{path}: non-positive dim entries {dim[1:4]}")
    for extra in dim[4:1 + ndim]:
        if extra > 1:
            raise NiftiParseError(
                f"{path}: dim declares a 4th+ axis of size {extra}; only 3D supported"
            )

    (datatype,) = struct.unpack_from(bo + "h", raw, 70)
    if datatype not in _DTYPES:
        raise UnsupportedDatatypeError(
            f"{path}: datatype code {datatype} unsupported "
            f"(supported: {sorted(_DTYPES)})"
        )
    dtype = np.dtype(_DTYPES[datatype]).newbyteorder(bo)

    pixdim = struct.unpack_from(bo + "8f", raw, 76)
    spacing = tuple(abs(p) if p != 0 else 1.0 for p in pixdim[1:4])

    (vox_offset,) = struct.unpack_from(bo + "f", raw, 108)
    vox_offset = int(vox_offset)
    if magic == b"n+1\x00" and vox_offset < HEADER_SIZE:
        raise NiftiParseError(f"{path}: vox_offset {vox_offset} below header size")

    scl_slope, scl_inter = struct.unpack_from(bo + "2f", raw, 112)
    if scl_slope == 0.0:
        scl_slope = 1.0

    # Affine from the sform when present, else pixdim-diagonal.
    (sform_code,) = struct.unpack_from(bo + "h", raw, 254)
    if sform_code > 0:
        srow = struct.unpack_from(bo + "12f", raw, 280)
        affine = np.vstack([np.array(srow, dtype=np.float64).reshape(3, 4),
                            [0.0, 0.0, 0.0, 1.0]])
    else:
        affine = np.diag([spacing[0], spacing[1], spacing[2], 1.0])

    n_vox = shape[0] * shape[1] * shape[2]
    nbytes = n_vox * dtype.itemsize
    payload = raw[vox_offset:vox_offset + nbytes]
    if len(payload) < nbytes:
        raise NiftiParseError(
            f"{path}: voxel payload truncated "
            f"({len(payload)} bytes, expected {nbytes})"
        )
    data = np.frombuffer(payload, dtype=dtype, count=n_vox)
    data = data.reshape(shape, order="F").astype(np.float32)
    if scl_slope != 1.0 or scl_inter != 0.0:
        data = data * np.float32(scl_slope) + np.float32(scl_inter)
    return CtVolume(data, spacing, affine)


def read_nifti_mask(path) -> BinaryMask:
    """Read a NIfTI file as a binary mask; nonzero voxels are inside."""
    vol = read_nifti(path)
    return BinaryMask(vol.voxels != 0, vol.spacing, vol.affine)


def _pack_header(shape, spacing, affine, datatype_code, itemsize) -> bytes:
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<b", hdr, 39, 0)                      # dim_info
    struct.pack_into("<8h", hdr, 40, 3, shape[0], shape[1], shape[2], 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, datatype_code)
    struct.pack_into("<h", hdr, 72, itemsize * 8)           # bitpix
    struct.pack_into("<8f", hdr, 76, 1.0, spacing[0], spacing[1], spacing[2],
                     0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, 352.0)                 # vox_offset
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)             # scl_slope/inter
    struct.pack_into("<b", hdr, 123, 10)                    # xyzt_units: mm | sec
    struct.pack_into("<2h", hdr, 252, 0, 1)                 # qform off, sform on
    struct.pack_into("<12f", hdr, 280, *np.asarray(affine, dtype=np.float64)[:3, :].ravel())
    hdr[344:348] = b"n+1\x00"
    return bytes(hdr)


def write_nifti(vol, path) -> None:
    """Write a volume or mask as little-endian single-file NIfTI-1.

    Masks go out as uint8; everything else as float32.
    """
    path = Path(path)
    if isinstance(vol, BinaryMask):
        data = vol.voxels.astype(np.uint8)
    elif isinstance(vol, (CtVolume, ProbabilityVolume)):
        data = vol.voxels.astype(np.float32)
    else:
        raise TypeError(f"cannot write object of type {type(vol).__name__}")
    code = _DTYPE_CODES[data.dtype]
    hdr = _pack_header(vol.dims, vol.spacing, vol.affine, code, data.dtype.itemsize)
    payload = data.ravel(order="F").tobytes()
    blob = hdr + b"\x00" * 4 + payload
    try:
        if path.suffix == ".gz" or path.name.endswith(".nii.gz"):
            # mtime pinned and no filename so identical volumes produce
            # identical bytes regardless of the destination path
            with open(path, "wb") as raw:
                with gzip.GzipFile(filename="", fileobj=raw, mode="wb",
                                   mtime=0) as fh:
                    fh.write(blob)
        else:
            path.write_bytes(blob)
    except OSError as exc:
        raise OSError(f"failed writing NIfTI to {path}: {exc}") from exc
