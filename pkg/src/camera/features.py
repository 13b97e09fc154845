"""
Multi-view, multi-scale camera feature maps.

At bench scale the maps come from the scene simulator instead of an image
backbone; this module only validates and wraps them.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.errors import SchemaError
from src.geometry.camera import CameraModel
from src.tensor.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CameraFeatures:
    """Feature pyramid of one camera: level l is H_l x W_l x C, halving per level."""
    camera: CameraModel
    levels: Tuple[Tensor, ...]

    @property
    def channels(self) -> int:
        return self.levels[0].shape[-1]

    def level(self, index: int) -> Tensor:
        return self.levels[index]


def validate_levels(levels: Sequence[np.ndarray], camera: CameraModel) -> None:
    if not levels:
        raise SchemaError(f"camera '{camera.name}' has no feature levels")
    for l, fmap in enumerate(levels):
        if np.ndim(fmap) != 3:
            raise SchemaError(f"camera '{camera.name}' level {l} is not H x W x C: {np.shape(fmap)}")
    channels = {np.shape(f)[2] for f in levels}
    if len(channels) != 1:
        raise SchemaError(f"camera '{camera.name}' levels disagree on channels: {sorted(channels)}")
    for l in range(1, len(levels)):
        (h0, w0, _), (h1, w1, _) = np.shape(levels[l - 1]), np.shape(levels[l])
        if h0 != 2 * h1 or w0 != 2 * w1:
            raise SchemaError(
                f"camera '{camera.name}' level {l} is {h1}x{w1}, expected half of {h0}x{w0}"
            )
    if len(camera.feature_scale) < len(levels):
        raise SchemaError(f"camera '{camera.name}' has {len(levels)} levels but {len(camera.feature_scale)} scales")
    for l, fmap in enumerate(levels):
        w, h = camera.feature_size(l)
        if np.shape(fmap)[:2] != (h, w):
            raise SchemaError(
                f"camera '{camera.name}' level {l} is {np.shape(fmap)[:2]}, camera model implies {(h, w)}"
            )


def load_features(scene) -> List[CameraFeatures]:
    """
    Wrap a scene's per-camera rasters.

    Args:
        scene: Any record with .cameras (CameraModel list) and .features
            (per camera, a list of H x W x C arrays)

    Returns:
        One CameraFeatures per camera, values unchanged
    """
    if len(scene.features) != len(scene.cameras):
        raise SchemaError(f"{len(scene.features)} feature pyramids for {len(scene.cameras)} cameras")
    out = []
    for camera, levels in zip(scene.cameras, scene.features):
        validate_levels(levels, camera)
        out.append(CameraFeatures(camera, tuple(Tensor(f) for f in levels)))
    logger.debug(f"[camera] loaded {len(out)} feature pyramids")
    return out
