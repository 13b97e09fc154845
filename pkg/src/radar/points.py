"""
Radar returns, multi-sweep accumulation and point filtering.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.errors import ContractError, SchemaError
from src.geometry.frames import BevGridSpec, RigidTransform, check_rotation

from config.settings import RADAR_MAX_SWEEPS, RADAR_RCS_MIN, RADAR_V_MAX

logger = logging.getLogger(__name__)

RAW_FEATURES = 7  # x, y, z, rcs, vx, vy, sweep_age


@dataclass(frozen=True)
class RadarPoint:
    """One return: position (m), RCS (dBsm), compensated Doppler velocity (m/s), age (s)."""
    position: Tuple[float, float, float]
    rcs: float
    velocity: Tuple[float, float]
    sweep_age: float = 0.0

    def features(self) -> np.ndarray:
        """Raw feature vector (x, y, z, rcs, vx, vy, sweep_age)."""
        return np.array([*self.position, self.rcs, *self.velocity, self.sweep_age])

    def to_dict(self) -> dict:
        return {
            "position": list(self.position),
            "rcs": self.rcs,
            "velocity": list(self.velocity),
            "sweep_age": self.sweep_age,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RadarPoint":
        try:
            return cls(
                tuple(float(v) for v in data["position"]),
                float(data["rcs"]),
                tuple(float(v) for v in data["velocity"]),
                float(data.get("sweep_age", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"malformed radar point: {e}")


@dataclass(frozen=True)
class RadarSweep:
    points: Tuple[RadarPoint, ...]
    ego_pose: RigidTransform   # sweep frame -> current frame
    timestamp: float

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "ego_pose": self.ego_pose.to_dict(),
            "points": [p.to_dict() for p in self.points],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RadarSweep":
        try:
            return cls(
                tuple(RadarPoint.from_dict(p) for p in data["points"]),
                RigidTransform.from_dict(data["ego_pose"]),
                float(data["timestamp"]),
            )
        except (KeyError, TypeError) as e:
            raise SchemaError(f"malformed radar sweep: {e}")


def points_to_array(points: Sequence[RadarPoint]) -> np.ndarray:
    """N x 7 raw feature matrix."""
    if not points:
        return np.zeros((0, RAW_FEATURES))
    return np.stack([p.features() for p in points])


def accumulate_sweeps(sweeps: Sequence[RadarSweep], current_time: float,
                      max_sweeps: int = RADAR_MAX_SWEEPS) -> List[RadarPoint]:
    """
    Bring every sweep into the current ego frame.

    Output order is newest sweep first, then each sweep's original order.
    """
    if len(sweeps) > max_sweeps:
        raise ContractError(f"{len(sweeps)} sweeps given, at most {max_sweeps} allowed")

    ordered = sorted(range(len(sweeps)), key=lambda i: -sweeps[i].timestamp)
    out: List[RadarPoint] = []
    for i in ordered:
        sweep = sweeps[i]
        check_rotation(sweep.ego_pose.rotation, f"sweep {i} ego pose")
        age = current_time - sweep.timestamp
        if age < 0:
            raise ContractError(f"sweep {i} is {-age:.3f} s newer than the current time")
        if not sweep.points:
            continue
        raw = points_to_array(sweep.points)
        positions = sweep.ego_pose.apply(raw[:, 0:3])
        velocities = sweep.ego_pose.rotate(np.column_stack([raw[:, 4:6], np.zeros(len(raw))]))
        for k, p in enumerate(sweep.points):
            out.append(RadarPoint(
                tuple(float(v) for v in positions[k]),
                p.rcs,
                (float(velocities[k, 0]), float(velocities[k, 1])),
                age,
            ))
    logger.debug(f"[radar] accumulated {len(out)} points from {len(sweeps)} sweeps")
    return out


@dataclass(frozen=True)
class RadarFilterConfig:
    """Predicate bounds; extent=None skips the extent test."""
    extent: Optional[BevGridSpec] = None
    v_max: float = RADAR_V_MAX
    rcs_min: float = RADAR_RCS_MIN

    @classmethod
    def all_pass(cls) -> "RadarFilterConfig":
        return cls(None, math.inf, -math.inf)


def filter_points(points: Sequence[RadarPoint], config: RadarFilterConfig) -> List[RadarPoint]:
    """Order-preserving predicate filter."""
    kept = []
    for p in points:
        if config.extent is not None and not config.extent.contains(p.position[0], p.position[1]):
            continue
        if math.hypot(p.velocity[0], p.velocity[1]) > config.v_max:
            continue
        if p.rcs < config.rcs_min:
            continue
        kept.append(p)
    if len(kept) != len(points):
        logger.debug(f"[radar] filter kept {len(kept)}/{len(points)} points")
    return kept
