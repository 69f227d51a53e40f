"""Phantom-comparison and exact-equivariance tests for vessel enhancement."""

import numpy as np
import pytest
from scipy import ndimage

from exactct.grids import BinaryMask, CtVolume, ProbabilityVolume
from exactct.synth import PhantomSpec, make_phantom
from exactct.vesselness import (
    DistanceParams,
    RefineSchedule,
    VesselParams,
    frangi_response,
    refine_probability,
    wall_distance_weight,
)


def cylinder_phantom(radius_mm, dims=(32, 32, 32), fill=200.0):
    c = tuple((d - 1) / 2.0 for d in dims)
    return make_phantom(PhantomSpec(dims, primitives=(
        {"kind": "cylinder", "center": c, "radius": radius_mm, "axis": 2,
         "half_length": dims[2], "fill": fill},), background=0.0))


def plate_phantom(thickness_mm=3.0, dims=(32, 32, 32), fill=200.0):
    c = tuple((d - 1) / 2.0 for d in dims)
    return make_phantom(PhantomSpec(dims, primitives=(
        {"kind": "box", "center": c, "size": (thickness_mm, 100.0, 100.0),
         "fill": fill},), background=0.0))


def blob_phantom(dims=(32, 32, 32), fill=200.0, radius=3.0):
    c = tuple((d - 1) / 2.0 for d in dims)
    return make_phantom(PhantomSpec(dims, primitives=(
        {"kind": "sphere", "center": c, "radius": radius, "fill": fill},),
        background=0.0))


def center_index(dims):
    return tuple(d // 2 for d in dims)


def test_params_validation():
    with pytest.raises(ValueError):
        VesselParams(scale_min_mm=0.0)
    with pytest.raises(ValueError):
        VesselParams(scale_min_mm=5.0, scale_max_mm=1.0)
    with pytest.raises(ValueError):
        VesselParams(polarity="sideways")
    with pytest.raises(ValueError):
        RefineSchedule((0.5, 1.2))
    with pytest.raises(ValueError):
        DistanceParams(sigma_mm=0.0)


def test_constant_volume_zero_response():
    vol = CtVolume(np.full((16, 16, 16), 40.0, dtype=np.float32))
    assert (frangi_response(vol).voxels == 0).all()


def test_small_volume_rejected():
    with pytest.raises(ValueError):
        frangi_response(CtVolume(np.zeros((4, 16, 16), dtype=np.float32)))


def test_cylinder_peak_scale():
    """On-axis response should peak at the scale nearest the tube radius."""
    vol = cylinder_phantom(3.0)
    params = VesselParams(1.0, 4.0, 5)
    scales = params.scales()
    cx, cy, cz = center_index(vol.dims)
    data = vol.voxels.astype(np.float64)

    from exactct.vesselness import _hessian_at_scale, _sym3_eigvals, _tube_measure
    per_scale = []
    for s in scales:
        h = _hessian_at_scale(data, [s, s, s], s)
        v = _tube_measure(_sym3_eigvals(h), params.alpha, params.beta, None)
        per_scale.append(v[cx, cy, cz])
    best = int(np.argmax(per_scale))
    target = int(np.argmin(np.abs(scales - 3.0)))
    assert abs(best - target) <= 1


def test_cylinder_vs_plate_ratio():
    cyl = frangi_response(cylinder_phantom(3.0))
    plate = frangi_response(plate_phantom(3.0))
    c = center_index(cyl.dims)
    assert cyl.voxels[c] >= 5.0 * plate.voxels[c]


def test_cylinder_vs_blob_ratio():
    cyl = frangi_response(cylinder_phantom(3.0))
    blob = frangi_response(blob_phantom(radius=3.0))
    c = center_index(cyl.dims)
    assert cyl.voxels[c] >= 3.0 * blob.voxels[c]


def test_rot90_equivariance_exact(rng):
    data = rng.normal(0, 100, (16, 16, 16)).astype(np.float32)
    vol = CtVolume(data)
    resp = frangi_response(vol)
    for axes in ((0, 1), (0, 2), (1, 2)):
        rotated = CtVolume(np.rot90(data, k=1, axes=axes).copy())
        resp_rot = frangi_response(rotated)
        np.testing.assert_array_equal(resp_rot.voxels,
                                      np.rot90(resp.voxels, k=1, axes=axes))


def test_dark_polarity():
    bright = cylinder_phantom(2.0, fill=200.0)
    dark = CtVolume(-bright.voxels)
    c = center_index(bright.dims)
    assert frangi_response(dark, VesselParams(polarity="dark")).voxels[c] == \
        frangi_response(bright).voxels[c]


# --- refinement -------------------------------------------------------------


def test_refine_constant_fixed_point():
    p = ProbabilityVolume(np.full((8, 8, 8), 0.3, dtype=np.float32))
    out = refine_probability(p, RefineSchedule((0.5, 0.2, 0.9)))
    np.testing.assert_allclose(out.voxels, 0.3, atol=1e-6)


def test_refine_lambda_one_identity(rng):
    p = ProbabilityVolume(rng.random((8, 8, 8)).astype(np.float32))
    out = refine_probability(p, RefineSchedule((1.0, 1.0)))
    np.testing.assert_allclose(out.voxels, p.voxels, atol=1e-7)


def test_refine_lambda_zero_is_max_filter(rng):
    p = ProbabilityVolume(rng.random((9, 9, 9)).astype(np.float32))
    out = refine_probability(p, RefineSchedule((0.0,)))
    oracle = ndimage.maximum_filter(p.voxels.astype(np.float64), size=3,
                                    mode="nearest")
    # interior max equals constant-padded max for non-negative inputs
    np.testing.assert_allclose(out.voxels, oracle, atol=1e-7)


def test_refine_pointwise_dominates(rng):
    p = ProbabilityVolume(rng.random((8, 8, 8)).astype(np.float32))
    out = refine_probability(p, RefineSchedule((0.5, 0.5)))
    assert (out.voxels >= p.voxels - 1e-6).all()


def test_refine_monotone(rng):
    a = rng.random((8, 8, 8)).astype(np.float32)
    b = np.clip(a + rng.random((8, 8, 8)).astype(np.float32) * 0.2, 0, 1)
    ra = refine_probability(ProbabilityVolume(a), RefineSchedule())
    rb = refine_probability(ProbabilityVolume(b), RefineSchedule())
    assert (ra.voxels <= rb.voxels + 1e-6).all()


# --- distance weighting -----------------------------------------------------


def test_blanking_inside_intestine(rng):
    dims = (12, 12, 12)
    p = ProbabilityVolume(rng.random(dims).astype(np.float32))
    wall = ProbabilityVolume(rng.random(dims).astype(np.float32))
    intestine = BinaryMask(rng.random(dims) < 0.3)
    out = wall_distance_weight(p, wall, intestine)
    assert (out.voxels[intestine.voxels] == 0).all()


def test_gaussian_proximity_profile():
    dims = (41, 41, 9)
    wall = np.zeros(dims, dtype=np.float32)
    wall[20, 20, 4] = 1.0
    p = ProbabilityVolume(np.ones(dims, dtype=np.float32))
    intestine = BinaryMask(np.zeros(dims, dtype=bool))
    sigma = 4.0
    out = wall_distance_weight(p, ProbabilityVolume(wall), intestine,
                               DistanceParams(sigma_mm=sigma, keep_percentile=100.0))
    profile = out.voxels[20:, 20, 4].astype(np.float64)
    half = profile[0] / 2.0
    r_half = np.interp(-half, -profile, np.arange(profile.size))
    assert abs(r_half - sigma * np.sqrt(2 * np.log(2))) <= 1.0


def test_zero_vessels_zero_output():
    dims = (10, 10, 10)
    p = ProbabilityVolume(np.zeros(dims, dtype=np.float32))
    wall = ProbabilityVolume(np.ones(dims, dtype=np.float32))
    out = wall_distance_weight(p, wall, BinaryMask(np.zeros(dims, dtype=bool)))
    assert (out.voxels == 0).all()


def test_output_bounded_by_input(rng):
    dims = (10, 10, 10)
    p = ProbabilityVolume(rng.random(dims).astype(np.float32))
    wall = ProbabilityVolume(rng.random(dims).astype(np.float32))
    out = wall_distance_weight(p, wall, BinaryMask(np.zeros(dims, dtype=bool)))
    assert (out.voxels <= p.voxels + 1e-6).all()
