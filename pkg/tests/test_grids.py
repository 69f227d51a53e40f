import numpy as np
import pytest
from hypothesis import given, strategies as st

from exactct.grids import (
    BinaryMask,
    CtVolume,
    GridMismatchError,
    ProbabilityVolume,
    window_hu,
)


def test_volume_validation():
    with pytest.raises(ValueError):
        CtVolume(np.zeros((2, 2)))          # not 3D
    with pytest.raises(ValueError):
        CtVolume(np.zeros((2, 2, 2)), (1.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        CtVolume(np.full((2, 2, 2), np.nan))


def test_volume_immutable():
    vol = CtVolume(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        vol.voxels[0, 0, 0] = 1.0


def test_grid_mismatch():
    a = CtVolume(np.zeros((2, 2, 2)))
    b = BinaryMask(np.zeros((3, 2, 2), dtype=bool))
    with pytest.raises(GridMismatchError):
        a.require_same_grid(b)


def test_probability_range_enforced():
    with pytest.raises(ValueError):
        ProbabilityVolume(np.full((2, 2, 2), 1.5))


def test_voxel_volume():
    vol = CtVolume(np.zeros((2, 2, 2)), (0.5, 2.0, 3.0))
    assert vol.voxel_volume_mm3() == pytest.approx(3.0)


def test_window_floor():
    vol = CtVolume(np.full((2, 2, 2), -1000.0))
    assert (window_hu(vol, -500, -50).voxels == 0).all()


def test_window_ceiling():
    vol = CtVolume(np.full((2, 2, 2), -50.0))
    assert (window_hu(vol, -500, -50).voxels == 1).all()


def test_window_midpoint():
    vol = CtVolume(np.full((2, 2, 2), -275.0))
    assert window_hu(vol, -500, -50).voxels == pytest.approx(0.5)


def test_window_bad_args():
    vol = CtVolume(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        window_hu(vol, 10, 10)


@given(st.lists(st.floats(-2000, 2000, allow_nan=False, width=32),
                min_size=2, max_size=16))
def test_window_monotone_bounded(values):
    arr = np.array(sorted(values), dtype=np.float32)
    vol = CtVolume(np.tile(arr[:, None, None], (1, 1, 1)))
    w = window_hu(vol, -150, 250).voxels[:, 0, 0]
    assert (np.diff(w) >= 0).all()
    assert w.min() >= 0.0 and w.max() <= 1.0
