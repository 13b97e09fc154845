"""
Surround camera rig for simulated scenes.
"""

import math
from typing import List, Sequence, Tuple

import numpy as np

from src.geometry.camera import CameraModel

from config.settings import RIG_FEATURE_SCALES, RIG_FOCAL, RIG_IMAGE_SIZE, RIG_MOUNT, RIG_YAWS_DEG


def surround_rig(
    yaws_deg: Sequence[float] = RIG_YAWS_DEG,
    mount: Sequence[float] = RIG_MOUNT,
    focal: float = RIG_FOCAL,
    image_size: Tuple[int, int] = RIG_IMAGE_SIZE,
    feature_scales: Sequence[float] = RIG_FEATURE_SCALES,
) -> List[CameraModel]:
    """
    Level cameras spread around the ego vehicle.

    Each camera sits at mount rotated by its own yaw, so the rig's forward
    offset points along every camera's optical axis.
    """
    cams = []
    for yaw_deg in yaws_deg:
        yaw = math.radians(yaw_deg)
        c, s = math.cos(yaw), math.sin(yaw)
        position = np.array([c * mount[0] - s * mount[1], s * mount[0] + c * mount[1], mount[2]])
        cams.append(CameraModel.mounted(
            f"cam_{int(round(yaw_deg)):+04d}", yaw, position, focal, image_size, feature_scales
        ))
    return cams
