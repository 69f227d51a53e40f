"""Cohort CSV round-trips, config layering, case manifests, overlay bundles."""

import json

import numpy as np
import pytest

from exactct.biomarkers import FEATURE_COLUMNS, FeatureVector
from exactct.cohort import (
    LabeledCohort,
    build_cohort,
    read_features_csv,
    read_labels_csv,
    write_features_csv,
    write_labels_csv,
)
from exactct.config import PipelineConfig, load_config
from exactct.grids import BinaryMask, CtVolume, ProbabilityVolume
from exactct.manifest import CaseManifest, ManifestError, load_case
from exactct.nifti import write_nifti
from exactct.overlay import (
    LAYER_COLORS,
    OverlayBundle,
    load_manifest,
    make_layer,
    write_bundle,
)


def feature_row(case_id, rng):
    vals = {c: float(rng.random()) for c in FEATURE_COLUMNS}
    vals["ptb_prob"] = 0.5
    return FeatureVector(case_id=case_id, **vals)


# --- cohort CSV --------------------------------------------------------------


def test_features_csv_lossless_roundtrip(tmp_path, rng):
    rows = [feature_row(f"case{i:03d}", rng) for i in range(5)]
    # exercise awkward values that need all 17 significant digits
    rows[0] = FeatureVector(case_id="case000", **{
        c: (0.1 + 1e-16 if c == "fat_ratio" else getattr(rows[0], c))
        for c in FEATURE_COLUMNS})
    path = tmp_path / "features.csv"
    write_features_csv(rows, path)
    back = read_features_csv(path)
    assert [r.case_id for r in back] == [r.case_id for r in rows]
    for a, b in zip(rows, back):
        np.testing.assert_array_equal(a.values(), b.values())


def test_features_csv_header_checked(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("case_id,wrong\nx,1\n")
    with pytest.raises(ValueError):
        read_features_csv(path)


def test_labels_csv_roundtrip(tmp_path):
    pairs = [("a", 1), ("b", 0), ("c", 1)]
    path = tmp_path / "labels.csv"
    write_labels_csv(pairs, path)
    assert read_labels_csv(path) == {"a": 1, "b": 0, "c": 1}


def test_build_cohort(rng):
    rows = [feature_row("a", rng), feature_row("b", rng)]
    cohort = build_cohort(rows, {"a": 1, "b": 0})
    np.testing.assert_array_equal(cohort.y(), [1, 0])
    assert cohort.X().shape == (2, 12)
    cohort.require_both_classes()
    with pytest.raises(ValueError):
        build_cohort(rows, {"a": 1})


def test_cohort_validation(rng):
    with pytest.raises(ValueError):
        LabeledCohort((feature_row("a", rng),), np.array([1, 0]))
    one = LabeledCohort((feature_row("a", rng),), np.array([1]))
    with pytest.raises(ValueError):
        one.require_both_classes()


# --- config ------------------------------------------------------------------


def test_config_defaults():
    cfg = PipelineConfig()
    assert cfg.fat.rays == 720
    assert cfg.calcified.t_calc == 130.0
    assert cfg.window.lo == -150.0 and cfg.window.hi == 250.0


def test_config_file_then_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"fat": {"rays": 360}, "seed": 7}))
    cfg = load_config(path, overrides=["fat.rays=180", "vessel.scale_count=3"])
    assert cfg.seed == 7
    assert cfg.fat.rays == 180          # --set wins over the file
    assert cfg.vessel.scale_count == 3
    assert cfg.calcified.t_calc == 130.0


def test_config_tuple_coercion(tmp_path):
    cfg = load_config(overrides=["refine.lambdas=[0.2, 0.8]"])
    assert cfg.refine.lambdas == (0.2, 0.8)


def test_config_unknown_key():
    with pytest.raises(ValueError):
        load_config(overrides=["typo.rays=1"])
    with pytest.raises(ValueError):
        load_config(overrides=["fat.rays"])


# --- manifests ---------------------------------------------------------------


def write_case(tmp_path, rng, drop_role=None, drop_vertebra=None):
    dims = (8, 8, 8)
    vol = CtVolume(rng.normal(0, 50, dims).astype(np.float32))
    write_nifti(vol, tmp_path / "ct.nii.gz")
    mask = BinaryMask(np.ones(dims, dtype=bool))
    for name in ("intestine", "body", "visceral_fat", "organ",
                 "L3", "L4", "L5", "S1"):
        write_nifti(mask, tmp_path / f"{name}.nii.gz")
    masks = {
        "intestine": "intestine.nii.gz",
        "body": "body.nii.gz",
        "visceral_fat": "visceral_fat.nii.gz",
        "organs": ["organ.nii.gz"],
        "vertebrae": {k: f"{k}.nii.gz" for k in ("L3", "L4", "L5", "S1")},
    }
    if drop_role:
        del masks[drop_role]
    if drop_vertebra:
        del masks["vertebrae"][drop_vertebra]
    doc = {"case_id": "t1", "ct": "ct.nii.gz", "masks": masks,
           "ptb_logit": -1.5, "label": 1}
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


def test_manifest_load_case(tmp_path, rng):
    mani = CaseManifest.from_file(write_case(tmp_path, rng))
    assert mani.case_id == "t1" and mani.ptb_logit == -1.5
    case = load_case(mani)
    assert case.volume.dims == (8, 8, 8)
    assert set(case.vertebrae) == {"L3", "L4", "L5", "S1"}


def test_manifest_missing_role_named(tmp_path, rng):
    path = write_case(tmp_path, rng, drop_role="intestine")
    with pytest.raises(ManifestError, match="intestine"):
        CaseManifest.from_file(path)


def test_manifest_missing_vertebra(tmp_path, rng):
    path = write_case(tmp_path, rng, drop_vertebra="L4")
    with pytest.raises(ManifestError, match="L4"):
        CaseManifest.from_file(path)


def test_manifest_dangling_path(tmp_path, rng):
    path = write_case(tmp_path, rng)
    (tmp_path / "body.nii.gz").unlink()
    with pytest.raises(ManifestError, match="does not exist"):
        CaseManifest.from_file(path)


# --- overlay bundles ---------------------------------------------------------


def small_bundle(rng, dims=(5, 4, 3)):
    prob = ProbabilityVolume(rng.random(dims).astype(np.float32))
    mask = BinaryMask(rng.random(dims) < 0.5)
    layers = (make_layer("comb_sign", prob), make_layer("fat", mask))
    return OverlayBundle("caseX", dims, (1.0, 1.0, 1.0), layers)


def test_bundle_roundtrip(tmp_path, rng):
    bundle = small_bundle(rng)
    path = write_bundle(bundle, tmp_path / "bundle")
    manifest = load_manifest(path)
    assert manifest["case_id"] == "caseX"
    assert manifest["dims"] == [5, 4, 3]
    names = {e["name"] for e in manifest["layers"]}
    assert names == {"comb_sign", "fat"}
    raw = (tmp_path / "bundle" / "comb_sign.bin").read_bytes()
    assert len(raw) == 5 * 4 * 3 * 4
    got = np.frombuffer(raw, dtype="<f4").reshape((5, 4, 3), order="F")
    np.testing.assert_array_equal(got, bundle.layers[0].data)


def test_bundle_default_palette(rng):
    prob = ProbabilityVolume(rng.random((2, 2, 2)).astype(np.float32))
    assert make_layer("comb_sign", prob).color == LAYER_COLORS["comb_sign"]
    assert make_layer("mystery", prob).color == "#ff00ff"


def test_bundle_shape_mismatch(tmp_path, rng):
    prob = ProbabilityVolume(rng.random((3, 3, 3)).astype(np.float32))
    bundle = OverlayBundle("c", (4, 4, 4), (1, 1, 1),
                           (make_layer("base", prob),))
    with pytest.raises(ValueError):
        write_bundle(bundle, tmp_path / "b")


def test_bundle_truncated_layer(tmp_path, rng):
    bundle = small_bundle(rng)
    path = write_bundle(bundle, tmp_path / "bundle")
    f = tmp_path / "bundle" / "fat.bin"
    f.write_bytes(f.read_bytes()[:-4])
    with pytest.raises(ValueError, match="bytes"):
        load_manifest(path)


def test_bundle_missing_layer_file(tmp_path, rng):
    bundle = small_bundle(rng)
    path = write_bundle(bundle, tmp_path / "bundle")
    (tmp_path / "bundle" / "fat.bin").unlink()
    with pytest.raises(FileNotFoundError):
        load_manifest(path)


def test_bundle_schema_rejects_garbage(tmp_path):
    import jsonschema
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"format": "exactct-overlay", "version": 1}))
    with pytest.raises(jsonschema.ValidationError):
        load_manifest(path)
