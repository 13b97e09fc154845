import math

import numpy as np
import pytest

from src.errors import ConfigError, GeometryError
from src.geometry.camera import CameraModel, project_to_cameras
from src.geometry.frames import (
    BevGridSpec,
    PolarCoord,
    RigidTransform,
    bev_cell_of,
    decompose_velocity,
    from_polar,
    to_polar,
    wrap_angle,
    wrap_angles,
)

from config.settings import MIN_GRID_CELLS


# ==================
# polar
# ==================

def test_to_polar_examples():
    p = to_polar((3.0, 4.0))
    assert p.range == 5.0 and p.azimuth == math.atan2(4.0, 3.0)
    assert to_polar((-1.0, 0.0)) == PolarCoord(1.0, math.pi)
    assert to_polar((0.0, 0.0)) == PolarCoord(0.0, 0.0)


def test_polar_round_trip(rng):
    r = rng.uniform(1e-3, 200.0, size=2000)
    az = rng.uniform(-math.pi, math.pi, size=2000)
    for rr, aa in zip(r, az):
        xy = np.array([rr * math.cos(aa), rr * math.sin(aa)])
        back = from_polar(to_polar(xy))
        assert np.abs(back - xy).max() < 1e-9


def test_wrap_angle():
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(0.3) == 0.3
    out = wrap_angles(np.array([-math.pi, 0.3, 7.0]))
    assert out[0] == pytest.approx(math.pi) and out[1] == 0.3
    assert -math.pi < out[2] <= math.pi


# ==================
# velocity decomposition
# ==================

def test_decompose_axis_aligned():
    v_tan, v_rad = decompose_velocity((1.0, 2.0), (10.0, 0.0))
    assert v_rad.tolist() == [1.0, 0.0]
    assert v_tan.tolist() == [0.0, 2.0]


def test_decompose_pure_radial():
    v_tan, _ = decompose_velocity((2.0, 2.0), (5.0, 5.0))
    assert np.abs(v_tan).max() < 1e-14


def test_decompose_random(rng):
    for _ in range(10_000):
        c = rng.uniform(-50, 50, size=2)
        v = rng.normal(scale=10.0, size=2)
        v_tan, v_rad = decompose_velocity(v, c)
        assert np.abs(v_tan + v_rad - v).max() <= 1e-12
        assert abs(v_tan @ c) <= 1e-12 * max(1.0, np.linalg.norm(c) * np.linalg.norm(v))


def test_decompose_degenerate_center():
    with pytest.raises(GeometryError):
        decompose_velocity((1.0, 0.0), (1e-7, 0.0))


# ==================
# BEV grid
# ==================

def test_grid_shape(small_spec):
    assert small_spec.shape == (8, 8, 8)
    default = BevGridSpec((-32.0, 32.0), (-32.0, 32.0), 0.5, 64)
    assert default.shape == (128, 128, 64)


def test_grid_rejects_bad_extent():
    with pytest.raises(ConfigError):
        BevGridSpec((-4.0, 4.0), (-4.0, 4.0), 0.3, 8)
    with pytest.raises(ConfigError):
        BevGridSpec((-2.0, 2.0), (-4.0, 4.0), 1.0, 8)


def test_grid_minimum_cells_per_axis():
    assert BevGridSpec((-4.0, 4.0), (-4.0, 4.0), 1.0, 8).shape == (MIN_GRID_CELLS, MIN_GRID_CELLS, 8)
    with pytest.raises(ConfigError, match=f">= {MIN_GRID_CELLS} cells, got 7"):
        BevGridSpec((-4.0, 4.0), (-3.5, 3.5), 1.0, 8)


def test_bev_cell_of(small_spec):
    assert bev_cell_of((-4.0, -4.0), small_spec) == (0, 0)
    assert bev_cell_of((-3.0, 0.0), small_spec) == (1, 4)
    assert bev_cell_of((-3.0 - 1e-12, 0.0), small_spec) == (0, 4)
    assert bev_cell_of((4.0, 0.0), small_spec) is None
    assert bev_cell_of((0.0, -9.0), small_spec) is None


def test_cell_center_round_trip(small_spec):
    centers = small_spec.cell_centers()
    for row in range(small_spec.rows):
        for col in range(small_spec.cols):
            assert bev_cell_of(centers[row, col], small_spec) == (row, col)


# ==================
# transforms and cameras
# ==================

def test_rigid_transform_rejects_shear():
    with pytest.raises(GeometryError):
        RigidTransform(np.array([[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]), np.zeros(3))


def _front_camera():
    return CameraModel.mounted("front", 0.0, (1.0, 0.0, 1.5), 100.0, (200, 100), (0.25, 0.125, 0.0625))


def test_point_on_axis_projects_to_principal_point():
    cam = _front_camera()
    (hit,) = project_to_cameras((11.0, 0.0, 1.5), [cam])
    assert hit.valid
    assert hit.uv == pytest.approx([100.0, 50.0], abs=1e-9)


def test_point_behind_camera_is_invalid():
    (hit,) = project_to_cameras((-5.0, 0.0, 1.5), [_front_camera()])
    assert not hit.valid


def test_projection_matches_homogeneous_oracle(rng):
    cams = [
        _front_camera(),
        CameraModel.mounted("left", math.pi / 2, (0.0, 0.5, 1.5), 80.0, (160, 96), (0.25, 0.125, 0.0625)),
    ]
    for _ in range(200):
        p = rng.uniform([-20, -20, -1], [20, 20, 3])
        for hit, cam in zip(project_to_cameras(p, cams), cams):
            P = cam.intrinsics @ np.hstack([cam.rotation, cam.translation[:, None]])
            h = P @ np.append(p, 1.0)
            if h[2] <= 0.1:
                assert not hit.valid
                continue
            uv = h[:2] / h[2]
            inside = 0 <= uv[0] < cam.image_size[0] and 0 <= uv[1] < cam.image_size[1]
            assert hit.valid == inside
            if inside:
                assert np.abs(hit.uv - uv).max() < 1e-9


def test_feature_level_scaling():
    cam = _front_camera()
    (hit,) = project_to_cameras((11.0, 0.0, 1.5), [cam], level=1)
    assert hit.uv == pytest.approx([12.5, 6.25])
    assert cam.feature_size(0) == (50, 25)


def test_camera_dict_round_trip():
    cam = _front_camera()
    back = CameraModel.from_dict(cam.to_dict())
    assert np.array_equal(back.rotation, cam.rotation)
    assert back.image_size == cam.image_size and back.feature_scale == cam.feature_scale
