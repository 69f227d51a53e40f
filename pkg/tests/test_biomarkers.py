"""Analytic-phantom tests for the five biomarkers and feature assembly."""

import math

import numpy as np
import pytest

from exactct.biomarkers import (
    FEATURE_COLUMNS,
    CalcifiedParams,
    FeatureVector,
    NecroticParams,
    RegionSpec,
    assemble_features,
    comb_sign_map,
    derive_regions,
    detect_calcified,
    detect_necrotic,
    fat_mask,
    fat_ratio_volume,
    polar_subcutaneous_area,
    ptb_probability,
    region_aggregate,
)
from exactct.grids import BinaryMask, CtVolume, ProbabilityVolume
from exactct.synth import PhantomSpec, make_phantom


# --- regions ----------------------------------------------------------------


def test_region_selector_axial_and_lateral():
    spec = RegionSpec("r", (2, 5), "left-of-midline", midline_x=4.5)
    sel = spec.selector((10, 6, 8))
    assert sel[:, :, :2].sum() == 0 and sel[:, :, 5:].sum() == 0
    assert sel[5, 0, 3] and not sel[4, 0, 3]


def test_region_central_band():
    spec = RegionSpec("c", (0, 4), "central-band", band_x=(3, 6), band_y=(2, 4))
    sel = spec.selector((9, 6, 4))
    assert sel[3, 2, 0] and sel[5, 3, 3]
    assert not sel[2, 2, 0] and not sel[3, 4, 0]


def test_region_validation():
    with pytest.raises(ValueError):
        RegionSpec("bad", (5, 5))
    with pytest.raises(ValueError):
        RegionSpec("bad", (0, 2), "sideways")


def test_derive_regions():
    dims = (20, 20, 30)
    body = np.zeros(dims, dtype=bool)
    body[2:18, 2:18, :] = True
    def vert(z0, z1):
        m = np.zeros(dims, dtype=bool)
        m[8:12, 2:6, z0:z1] = True
        return BinaryMask(m)
    regions = derive_regions(BinaryMask(body),
                             {"L3": vert(20, 24), "L4": vert(14, 18),
                              "L5": vert(8, 12), "S1": vert(2, 6)})
    assert regions["L3S1_left"].axial_range == (2, 24)
    assert regions["L4L5"].axial_range == (8, 18)
    sel_l = regions["L3S1_left"].selector(dims)
    sel_r = regions["L3S1_right"].selector(dims)
    assert not (sel_l & sel_r).any()


def test_region_aggregate_constant():
    p = ProbabilityVolume(np.ones((6, 6, 6), dtype=np.float32))
    total, ratio = region_aggregate(p, RegionSpec("all", (0, 6)))
    assert total == pytest.approx(216.0)
    assert ratio == pytest.approx(1.0)


def test_region_aggregate_zero():
    p = ProbabilityVolume(np.zeros((4, 4, 4), dtype=np.float32))
    assert region_aggregate(p, RegionSpec("all", (0, 4))) == (0.0, 0.0)


def test_region_aggregate_matches_loop(rng):
    p = ProbabilityVolume(rng.random((10, 10, 10)).astype(np.float32))
    spec = RegionSpec("band", (2, 8), "left-of-midline", midline_x=4.5)
    sel = spec.selector(p.dims)
    total = 0.0
    for x, y, z in np.argwhere(sel):
        total += float(p.voxels[x, y, z])
    got_total, got_ratio = region_aggregate(p, spec)
    assert got_total == pytest.approx(total, abs=1e-9)
    assert got_ratio == pytest.approx(total / sel.sum(), abs=1e-9)


# --- comb sign --------------------------------------------------------------


def comb_phantom(tube_gap_mm):
    """Bright wall ring with a vertical bright tube at a given wall gap.

    The field of view is filled with soft tissue so the sole tubular
    structure is the engorged vessel next to the gut wall.
    """
    dims = (96, 64, 24)
    gut = (24.0, 31.5, 11.5)
    prims = [
        {"kind": "cylinder", "center": gut, "radius": 6.0, "axis": 2,
         "half_length": 24.0, "fill": 80.0},
        {"kind": "cylinder", "center": gut, "radius": 4.0, "axis": 2,
         "half_length": 24.0, "fill": 10.0},
        {"kind": "cylinder", "center": (24.0 + 6.0 + tube_gap_mm, 31.5, 11.5),
         "radius": 1.5, "axis": 2, "half_length": 9.0, "fill": 150.0},
    ]
    vol = make_phantom(PhantomSpec(dims, primitives=tuple(prims),
                                   background=40.0))
    X, Y = np.meshgrid(np.arange(96), np.arange(64), indexing="ij")
    gut2d = (X - 24.0) ** 2 + (Y - 31.5) ** 2 <= 36.0
    intestine = np.broadcast_to(gut2d[:, :, None], dims).copy()
    return vol, BinaryMask(intestine)


def test_comb_zero_inside_intestine():
    vol, intestine = comb_phantom(2.0)
    comb = comb_sign_map(vol, intestine)
    assert (comb.voxels[intestine.voxels] == 0).all()
    assert comb.voxels.min() >= 0.0 and comb.voxels.max() <= 1.0


def test_comb_near_tube_beats_far_tube():
    near_vol, intestine = comb_phantom(2.0)
    far_vol, _ = comb_phantom(40.0)
    near = comb_sign_map(near_vol, intestine).voxels.sum()
    far = comb_sign_map(far_vol, intestine).voxels.sum()
    assert near >= 5.0 * far


# --- fat ratio --------------------------------------------------------------


def test_fat_mask_annulus():
    dims = (64, 64, 8)
    prims = (
        {"kind": "cylinder", "center": (31.5, 31.5, 3.5), "radius": 30.0,
         "axis": 2, "half_length": 8.0, "fill": 40.0},
        {"kind": "annulus_slab", "center": (31.5, 31.5, 0.0), "r_inner": 20.0,
         "r_outer": 28.0, "z_range": (0.0, 8.0), "fill": -80.0},
    )
    vol = make_phantom(PhantomSpec(dims, primitives=prims))
    mask = fat_mask(vol)
    X, Y = np.meshgrid(np.arange(64), np.arange(64), indexing="ij")
    rad2 = (X - 31.5) ** 2 + (Y - 31.5) ** 2
    ring = (rad2 >= 400.0) & (rad2 <= 784.0)
    # opening may shave the one-voxel rim; interior of the ring must survive
    inner = (rad2 >= 441.0) & (rad2 <= 729.0)
    assert (mask.voxels[np.broadcast_to(inner[:, :, None], dims)]).all()
    assert not mask.voxels[~np.broadcast_to(ring[:, :, None], dims)].any()


def test_fat_mask_kills_singleton():
    vol = np.full((9, 9, 9), 40.0, dtype=np.float32)
    vol[4, 4, 4] = -80.0
    assert fat_mask(CtVolume(vol)).count() == 0


def annulus_slice(n, r_in, r_out, center=None):
    c = (n - 1) / 2.0 if center is None else center
    X, Y = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    rad2 = (X - c) ** 2 + (Y - c) ** 2
    return (rad2 >= r_in ** 2) & (rad2 <= r_out ** 2)


def test_polar_area_annulus():
    n = 128
    mask = annulus_slice(n, 40.0, 50.0)
    c = ((n - 1) / 2.0, (n - 1) / 2.0)
    area, table = polar_subcutaneous_area(mask, c, g=720)
    assert abs(area - 900 * math.pi) / (900 * math.pi) < 0.02


def test_polar_area_empty():
    area, _ = polar_subcutaneous_area(np.zeros((32, 32), dtype=bool), (15.5, 15.5))
    assert area == 0.0


def test_polar_area_full_disk():
    n = 96
    mask = annulus_slice(n, 0.0, 40.0)
    area, table = polar_subcutaneous_area(mask, ((n - 1) / 2.0,) * 2, g=720)
    assert (table[:, 1] == 0).all()
    assert abs(area - math.pi * 1600) / (math.pi * 1600) < 0.02


def test_polar_area_convergence():
    n = 128
    mask = annulus_slice(n, 40.0, 50.0)
    c = ((n - 1) / 2.0,) * 2
    a1, _ = polar_subcutaneous_area(mask, c, g=360)
    a2, _ = polar_subcutaneous_area(mask, c, g=720)
    assert abs(a2 - a1) / a1 < 0.01


def test_polar_center_outside():
    with pytest.raises(ValueError):
        polar_subcutaneous_area(np.zeros((8, 8), dtype=bool), (20.0, 2.0))


def fat_ratio_phantom(visc_r, n=128, nz=6):
    prims = [
        {"kind": "cylinder", "center": ((n - 1) / 2.0, (n - 1) / 2.0, (nz - 1) / 2.0),
         "radius": 55.0, "axis": 2, "half_length": nz, "fill": 40.0},
        {"kind": "annulus_slab", "center": ((n - 1) / 2.0, (n - 1) / 2.0, 0.0),
         "r_inner": 40.0, "r_outer": 50.0, "z_range": (0.0, nz), "fill": -80.0},
    ]
    if visc_r > 0:
        prims.append({"kind": "cylinder",
                      "center": ((n - 1) / 2.0, (n - 1) / 2.0, (nz - 1) / 2.0),
                      "radius": visc_r, "axis": 2, "half_length": nz, "fill": -80.0})
    return make_phantom(PhantomSpec((n, n, nz), primitives=tuple(prims)))


def test_fat_ratio_pure_annulus_zero():
    vol = fat_ratio_phantom(0.0)
    res = fat_ratio_volume(vol, RegionSpec("L4L5", (0, 6)), g=720)
    # every fat pixel belongs to the seeded outer band, so the ratio is exact
    assert res.fat_ratio == 0.0
    assert res.per_slice_total == res.per_slice_subcut


def test_fat_ratio_with_visceral_disk():
    vol = fat_ratio_phantom(10.0)
    res = fat_ratio_volume(vol, RegionSpec("L4L5", (0, 6)), g=720)
    assert res.fat_ratio == pytest.approx(1000.0 / 900.0 - 1.0, rel=0.03)


def test_fat_ratio_doubling_g():
    vol = fat_ratio_phantom(10.0)
    region = RegionSpec("L4L5", (0, 6))
    a = fat_ratio_volume(vol, region, g=360)
    b = fat_ratio_volume(vol, region, g=720)
    assert abs(sum(b.per_slice_subcut) - sum(a.per_slice_subcut)) / sum(a.per_slice_subcut) < 0.01


def test_fat_ratio_classification_doc_example():
    # aggregate ratio 0.45 against the published single-feature threshold
    assert 0.45 >= 0.2969


def test_fat_ratio_all_degenerate():
    vol = CtVolume(np.full((16, 16, 4), -1000.0, dtype=np.float32))
    with pytest.raises(ValueError):
        fat_ratio_volume(vol, RegionSpec("L4L5", (0, 4)), g=90)


# --- calcified / necrotic ---------------------------------------------------


def node_phantom():
    dims = (40, 40, 20)
    vol = np.full(dims, 40.0, dtype=np.float32)
    organ = np.zeros(dims, dtype=bool)
    organ[5:15, 5:15, 5:15] = True
    vol[organ] = 60.0
    # three calcified nodes away from the organ
    nodes = [((28, 10, 10), 2), ((30, 28, 8), 1), ((10, 30, 14), 2)]
    for (x, y, z), r in nodes:
        vol[x - r:x + r + 1, y - r:y + r + 1, z - r:z + r + 1] = 300.0
    return CtVolume(vol), BinaryMask(organ), nodes


def test_calcified_override_never_flags_organ():
    vol, organ, _ = node_phantom()
    hot = vol.voxels.copy()
    hot[8, 8, 8] = 500.0        # hot voxel inside the organ
    mask, volume, comps = detect_calcified(CtVolume(hot), [organ])
    from exactct.morphology import StructuringElement, dilate
    dil = dilate(organ, StructuringElement("cube", 2), 1)
    assert not mask.voxels[dil.voxels].any()


def test_calcified_flags_outside():
    vol, organ, nodes = node_phantom()
    mask, volume, comps = detect_calcified(vol, [organ])
    assert len(comps) == 3
    analytic = sum((2 * r + 1) ** 3 for _, r in nodes)
    assert abs(volume - analytic) / analytic < 0.10
    for (x, y, z), _ in nodes:
        assert mask.voxels[x, y, z]


def test_calcified_abdominal_range_and_edges():
    vol, organ, nodes = node_phantom()
    mask, volume, comps = detect_calcified(
        vol, [organ], CalcifiedParams(abdominal_range=(0, 9)))
    # only the slabs below z=9 survive: node 1 (z 8-12) and node 2 (z 7-9)
    assert len(comps) == 2


def test_calcified_tcalc_floor():
    with pytest.raises(ValueError):
        CalcifiedParams(t_calc=50.0)


def test_necrotic_phantom_node():
    dims = (40, 40, 20)
    vol = np.full(dims, 60.0, dtype=np.float32)
    organ = np.zeros(dims, dtype=bool)
    organ[10:30, 10:30, 4:16] = True
    # fluid node radius 5 inside the organ ROI
    X, Y, Z = np.meshgrid(*[np.arange(d) for d in dims], indexing="ij")
    node = (X - 20) ** 2 + (Y - 20) ** 2 + (Z - 10) ** 2 <= 25.0
    vol[node] = 15.0
    visceral = BinaryMask(np.zeros(dims, dtype=bool))
    mask, volume = detect_necrotic(CtVolume(vol), [BinaryMask(organ)], visceral)
    analytic = node.sum()
    assert volume > 0
    assert abs(volume - analytic) / analytic < 0.25


def test_necrotic_singleton_removed():
    dims = (20, 20, 20)
    vol = np.full(dims, 60.0, dtype=np.float32)
    organ = np.zeros(dims, dtype=bool)
    organ[5:15, 5:15, 5:15] = True
    vol[10, 10, 10] = 15.0
    mask, volume = detect_necrotic(CtVolume(vol), [BinaryMask(organ)],
                                   BinaryMask(np.zeros(dims, dtype=bool)))
    assert volume == 0.0


def test_necrotic_excludes_visceral_fat():
    dims = (20, 20, 20)
    vol = np.full(dims, 15.0, dtype=np.float32)
    organ = np.zeros(dims, dtype=bool)
    organ[5:15, 5:15, 5:15] = True
    visceral = np.ones(dims, dtype=bool)
    mask, volume = detect_necrotic(CtVolume(vol), [BinaryMask(organ)],
                                   BinaryMask(visceral))
    assert volume == 0.0


def test_necrotic_params_validation():
    with pytest.raises(ValueError):
        NecroticParams(t_low=50.0, t_high=10.0)


# --- ptb and assembly -------------------------------------------------------


def test_ptb_values():
    assert ptb_probability(0.0) == pytest.approx(0.5)
    assert ptb_probability(math.log(3.0)) == pytest.approx(0.75)
    assert ptb_probability(-10.0) == pytest.approx(4.5397868702434395e-05, abs=1e-9)


def test_ptb_nonfinite():
    with pytest.raises(ValueError):
        ptb_probability(float("nan"))


def test_feature_columns_are_12():
    assert len(FEATURE_COLUMNS) == 12


def test_assemble_all_zero():
    from exactct.biomarkers import FatResult
    fat = FatResult(0.0, (0.0,), (0.0,), (1.0,), ())
    fv = assemble_features("c", (0, 0), (0, 0), (0, 0), fat, 0.25, 0.0, 0.0)
    assert fv.ptb_prob == 0.25
    assert (fv.values()[:7] == 0).all()


def test_assemble_nonfinite_named():
    from exactct.biomarkers import FatResult
    fat = FatResult(float("nan"), (0.0,), (0.0,), (1.0,), ())
    with pytest.raises(ValueError, match="fat_ratio"):
        assemble_features("c", (0, 0), (0, 0), (0, 0), fat, 0.5, 0.0, 0.0)


def test_feature_vector_invariants():
    kwargs = {c: 0.0 for c in FEATURE_COLUMNS}
    kwargs["ptb_prob"] = 1.5
    with pytest.raises(ValueError):
        FeatureVector(case_id="x", **kwargs)
    kwargs["ptb_prob"] = 0.5
    kwargs["calcified_volume"] = -1.0
    with pytest.raises(ValueError):
        FeatureVector(case_id="x", **kwargs)
