from types import SimpleNamespace

import numpy as np
import pytest

from src.camera.features import load_features
from src.errors import SchemaError
from src.geometry.camera import CameraModel


def _cam(name, yaw):
    return CameraModel.mounted(name, yaw, (0.0, 0.0, 1.5), 60.0, (64, 32), (0.25, 0.125, 0.0625))


def _pyramid(r, channels=4):
    return [r.normal(size=(8, 16, channels)), r.normal(size=(4, 8, channels)), r.normal(size=(2, 4, channels))]


def test_two_cameras_three_levels(rng):
    scene = SimpleNamespace(cameras=[_cam("a", 0.0), _cam("b", np.pi)], features=[_pyramid(rng), _pyramid(rng)])
    feats = load_features(scene)
    assert len(feats) == 2
    assert all(len(f.levels) == 3 for f in feats)
    for f, raw in zip(feats, scene.features):
        for t, arr in zip(f.levels, raw):
            assert np.abs(t.data - arr).max() == 0.0


def test_non_halving_level_is_rejected(rng):
    pyr = _pyramid(rng)
    pyr[2] = np.zeros((3, 4, 4))
    with pytest.raises(SchemaError):
        load_features(SimpleNamespace(cameras=[_cam("a", 0.0)], features=[pyr]))


def test_channel_mismatch_is_rejected(rng):
    pyr = _pyramid(rng)
    pyr[1] = np.zeros((4, 8, 5))
    with pytest.raises(SchemaError):
        load_features(SimpleNamespace(cameras=[_cam("a", 0.0)], features=[pyr]))


def test_zero_rasters_are_accepted():
    pyr = [np.zeros((8, 16, 4)), np.zeros((4, 8, 4)), np.zeros((2, 4, 4))]
    (feat,) = load_features(SimpleNamespace(cameras=[_cam("a", 0.0)], features=[pyr]))
    assert not feat.level(0).data.any()
    assert feat.channels == 4
