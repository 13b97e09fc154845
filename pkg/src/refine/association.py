"""
Soft polar association of radar returns to a proposal.

A return belongs to a proposal when its azimuth and range both fall in a
closed window around the proposal center's polar coordinates.
"""

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from src.errors import ConfigError
from src.geometry.frames import to_polar, wrap_angles
from src.radar.points import RadarPoint, points_to_array

from config.settings import SPA_AZIMUTH_DEG, SPA_RADIAL

WINDOW_SLACK = 1e-12


@dataclass(frozen=True)
class AssociationConfig:
    azimuth_window: float = math.radians(SPA_AZIMUTH_DEG)   # radians
    radial_window: float = SPA_RADIAL                        # meters

    def __post_init__(self):
        if self.azimuth_window <= 0 or self.radial_window <= 0:
            raise ConfigError(
                f"association windows must be positive, got {self.azimuth_window} rad / {self.radial_window} m"
            )

    @classmethod
    def from_degrees(cls, azimuth_deg: float, radial: float) -> "AssociationConfig":
        return cls(math.radians(azimuth_deg), radial)


def soft_polar_associate(center: Sequence[float], points: Union[Sequence[RadarPoint], np.ndarray],
                         cfg: AssociationConfig) -> np.ndarray:
    """
    Indices of the returns inside the proposal's polar window, ascending.

    Args:
        center: Proposal center (x, y[, z])
        points: RadarPoints or their N x 7 feature matrix
        cfg: Window sizes
    """
    raw = points if isinstance(points, np.ndarray) else points_to_array(points)
    if len(raw) == 0:
        return np.zeros(0, dtype=np.int64)
    ref = to_polar(center)
    ranges = np.hypot(raw[:, 0], raw[:, 1])
    azimuths = np.arctan2(raw[:, 1], raw[:, 0])
    d_az = np.abs(wrap_angles(azimuths - ref.azimuth))
    d_r = np.abs(ranges - ref.range)
    keep = (d_az <= cfg.azimuth_window + WINDOW_SLACK) & (d_r <= cfg.radial_window + WINDOW_SLACK)
    return np.nonzero(keep)[0]
