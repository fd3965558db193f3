import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vpx.geometry import (
    OUT_OF_RANGE,
    CameraIntrinsics,
    DepthDiscretization,
    backproject,
    bin_to_depth,
    continuous_bin,
    discretize_depth,
    discretize_depths,
    project,
)

CAM = CameraIntrinsics(285.71, 285.71, 160.0, 120.0)


@given(st.floats(-1500, 1500), st.floats(-1500, 1500), st.floats(200, 8000))
@settings(max_examples=200, deadline=None)
def test_project_backproject_round_trip(x, y, z):
    u, v = project([x, y, z], CAM)
    np.testing.assert_allclose(backproject(u, v, z, CAM), [x, y, z], rtol=1e-9, atol=1e-6)


def test_principal_point_projects_to_center():
    assert tuple(project([0.0, 0.0, 2000.0], CAM)) == (160.0, 120.0)


def test_project_rejects_points_behind_camera():
    with pytest.raises(ValueError):
        project([0, 0, 0], CAM)
    with pytest.raises(ValueError):
        backproject(1.0, 1.0, -5.0, CAM)


def test_intrinsics_validate_and_serialize():
    with pytest.raises(ValueError):
        CameraIntrinsics(0, 1, 0, 0)
    assert CameraIntrinsics.from_dict(CAM.to_dict()) == CAM
    c = CameraIntrinsics.centered(288, 288)
    assert (c.cx, c.cy) == (144.0, 144.0)


def test_discretize_boundaries():
    d = DepthDiscretization(2000.0, 15.0, 40)
    assert discretize_depth(2000.0, d) == 20
    assert discretize_depth(2000.0 - 1e-9, d) == 19
    assert discretize_depth(d.z_min, d) == 0
    assert discretize_depth(d.z_max, d) == OUT_OF_RANGE
    assert discretize_depth(d.z_min - 0.01, d) == OUT_OF_RANGE
    assert discretize_depth(d.z_max - 0.01, d) == 39


def test_discretize_array_matches_scalar():
    d = DepthDiscretization(2500.0, 25.0, 24)
    z = np.array([2199.0, 2200.0, 2500.0, 2799.9, 2800.0, np.nan, np.inf])
    want = [discretize_depth(v, d) if math.isfinite(v) else OUT_OF_RANGE for v in z]
    assert discretize_depths(z, d).tolist() == want


@given(st.integers(0, 39))
def test_bin_center_round_trip(b):
    d = DepthDiscretization(3000.0, 15.0, 40)
    z = bin_to_depth(b, d)
    assert discretize_depth(z, d) == b
    assert continuous_bin(z, d) == pytest.approx(b + 0.5)


def test_discretization_validation():
    with pytest.raises(ValueError):
        DepthDiscretization(1000.0, 0.0, 4)
    with pytest.raises(ValueError):
        DepthDiscretization(1000.0, 1.0, 0)
    with pytest.raises(ValueError):
        bin_to_depth(40, DepthDiscretization(1000.0))
