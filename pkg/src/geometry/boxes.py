"""
Oriented 3D boxes in the ego frame.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.errors import GeometryError, SchemaError
from src.geometry.frames import wrap_angle

from config.settings import CLASSES


@dataclass(frozen=True)
class Box3D:
    """Center (m), size (w, l, h) in m, yaw in (-pi, pi], BEV velocity (m/s), class label."""
    center: Tuple[float, float, float]
    size: Tuple[float, float, float]
    yaw: float
    velocity: Tuple[float, float]
    label: str

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "size", tuple(float(v) for v in self.size))
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))
        if len(self.center) != 3 or len(self.size) != 3 or len(self.velocity) != 2:
            raise GeometryError("box needs a 3D center, a 3D size and a 2D velocity")
        if min(self.size) <= 0:
            raise GeometryError(f"box size must be positive, got {self.size}")
        if self.label not in CLASSES:
            raise GeometryError(f"unknown class '{self.label}'")

    @property
    def class_id(self) -> int:
        return CLASSES.index(self.label)

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.center[:2])

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "size": list(self.size),
            "yaw": self.yaw,
            "velocity": list(self.velocity),
            "class": self.label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Box3D":
        try:
            return cls(
                tuple(data["center"]),
                tuple(data["size"]),
                float(data["yaw"]),
                tuple(data["velocity"]),
                str(data["class"]),
            )
        except (KeyError, TypeError, ValueError, GeometryError) as e:
            raise SchemaError(f"malformed box: {e}")


def bev_corners(box: Box3D, center_xy: Optional[Sequence[float]] = None) -> np.ndarray:
    """4 x 2 footprint corners, counter-clockwise, length along the heading."""
    w, l, _ = box.size
    local = np.array([[l / 2, w / 2], [-l / 2, w / 2], [-l / 2, -w / 2], [l / 2, -w / 2]])
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    center = box.center[:2] if center_xy is None else center_xy
    return local @ np.array([[c, s], [-s, c]]) + np.asarray(center, dtype=np.float64)
