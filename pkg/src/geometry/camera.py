"""
Pinhole camera models and projection of ego-frame points.

The camera frame is x right, y down, z forward (depth). A CameraModel holds
the ego -> camera transform, so a point p projects as K (R p + t).
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.errors import GeometryError, SchemaError
from src.geometry.frames import check_rotation

from config.settings import CAMERA_MIN_DEPTH


@dataclass(frozen=True)
class CameraModel:
    """Intrinsics, ego -> camera extrinsics, image size and per-level feature scales."""
    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    image_size: Tuple[int, int]               # (width, height) pixels
    feature_scale: Tuple[float, ...] = (1.0,)  # feature pixels per image pixel, per level
    name: str = "cam"

    def __post_init__(self):
        k = np.asarray(self.intrinsics, dtype=np.float64)
        if k.shape != (3, 3):
            raise GeometryError(f"camera '{self.name}' intrinsics must be 3 x 3")
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise GeometryError(f"camera '{self.name}' focal lengths must be positive")
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "rotation", check_rotation(self.rotation, f"camera '{self.name}' rotation"))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))
        object.__setattr__(self, "feature_scale", tuple(float(s) for s in self.feature_scale))

    @classmethod
    def mounted(
        cls,
        name: str,
        yaw: float,
        mount: Sequence[float],
        focal: float,
        image_size: Tuple[int, int],
        feature_scale: Sequence[float],
    ) -> "CameraModel":
        """Level camera at mount position looking along ego-frame heading yaw."""
        s, c = math.sin(yaw), math.cos(yaw)
        rotation = np.array([
            [s, -c, 0.0],     # right
            [0.0, 0.0, -1.0],  # down
            [c, s, 0.0],      # forward
        ])
        width, height = image_size
        intrinsics = np.array([
            [focal, 0.0, width / 2.0],
            [0.0, focal, height / 2.0],
            [0.0, 0.0, 1.0],
        ])
        translation = -rotation @ np.asarray(mount, dtype=np.float64)
        return cls(intrinsics, rotation, translation, (width, height), tuple(feature_scale), name)

    def feature_size(self, level: int) -> Tuple[int, int]:
        """(width, height) of the level's feature map."""
        s = self.feature_scale[level]
        return int(round(self.image_size[0] * s)), int(round(self.image_size[1] * s))

    def project_points(self, points: np.ndarray, level: Optional[int] = None):
        """
        Project ego-frame points.

        Args:
            points: N x 3 ego positions
            level: When given, uv is scaled to that feature level

        Returns:
            (uv N x 2, depth N, valid N)
        """
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        cam = pts @ self.rotation.T + self.translation
        depth = cam[:, 2]
        valid = depth > CAMERA_MIN_DEPTH
        safe = np.where(valid, depth, 1.0)
        homog = cam @ self.intrinsics.T
        uv = homog[:, :2] / safe[:, None]
        width, height = self.image_size
        valid &= (uv[:, 0] >= 0) & (uv[:, 0] < width) & (uv[:, 1] >= 0) & (uv[:, 1] < height)
        uv = np.where(valid[:, None], uv, 0.0)
        if level is not None:
            uv = uv * self.feature_scale[level]
        return uv, depth, valid

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "intrinsics": self.intrinsics.tolist(),
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "image_size": list(self.image_size),
            "feature_scale": list(self.feature_scale),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CameraModel":
        try:
            return cls(
                intrinsics=np.array(data["intrinsics"]),
                rotation=np.array(data["rotation"]),
                translation=np.array(data["translation"]),
                image_size=tuple(data["image_size"]),
                feature_scale=tuple(data["feature_scale"]),
                name=data.get("name", "cam"),
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, GeometryError):
                raise
            raise SchemaError(f"malformed camera entry: {e}")


@dataclass(frozen=True)
class Projection:
    camera: int
    uv: np.ndarray
    valid: bool


def project_to_cameras(point: Sequence[float], cams: Sequence[CameraModel],
                       level: Optional[int] = None) -> List[Projection]:
    """Project one ego-frame point into every camera; invalid hits carry valid=False."""
    out = []
    for index, cam in enumerate(cams):
        uv, _, valid = cam.project_points(np.asarray(point, dtype=np.float64), level)
        out.append(Projection(index, uv[0], bool(valid[0])))
    return out
