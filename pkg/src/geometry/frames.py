"""
Ego-frame conventions, the BEV grid and polar helpers.

Ego frame: x forward, y left, z up. Azimuth is measured from +x toward +y
and lives in (-pi, pi]. BEV maps are indexed [row, col] with row <-> x and
col <-> y, row 0 at x_min and col 0 at y_min.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.errors import ConfigError, GeometryError

from config.settings import MIN_GRID_CELLS

ORTHONORMAL_TOL = 1e-9
DEGENERATE_CENTER = 1e-6


def wrap_angle(angle: float) -> float:
    """Map an angle into (-pi, pi]; values already inside are returned as is."""
    if -math.pi < angle <= math.pi:
        return angle
    wrapped = math.fmod(angle + math.pi, 2 * math.pi)
    if wrapped <= 0:
        wrapped += 2 * math.pi
    return wrapped - math.pi


def wrap_angles(angles: np.ndarray) -> np.ndarray:
    """Vectorized wrap_angle."""
    a = np.asarray(angles, dtype=np.float64)
    out = np.mod(a + np.pi, 2 * np.pi) - np.pi
    out = np.where(out <= -np.pi, out + 2 * np.pi, out)
    inside = (a > -np.pi) & (a <= np.pi)
    return np.where(inside, a, out)


@dataclass(frozen=True)
class BevGridSpec:
    """Metric extent, resolution and channel count shared by all BEV maps."""
    x_range: Tuple[float, float]
    y_range: Tuple[float, float]
    resolution: float
    channels: int

    def __post_init__(self):
        if self.resolution <= 0:
            raise ConfigError(f"BEV resolution must be positive, got {self.resolution}")
        if self.channels < 1:
            raise ConfigError(f"BEV channels must be >= 1, got {self.channels}")
        for label, (lo, hi) in (("x", self.x_range), ("y", self.y_range)):
            cells = (hi - lo) / self.resolution
            if abs(cells - round(cells)) > 1e-9:
                raise ConfigError(f"BEV {label} extent {hi - lo} m is not a whole number of cells")
            if round(cells) < MIN_GRID_CELLS:
                raise ConfigError(f"BEV {label} axis needs >= {MIN_GRID_CELLS} cells, got {round(cells)}")

    @property
    def rows(self) -> int:
        return int(round((self.x_range[1] - self.x_range[0]) / self.resolution))

    @property
    def cols(self) -> int:
        return int(round((self.y_range[1] - self.y_range[0]) / self.resolution))

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.rows, self.cols, self.channels

    def cell_center(self, row: float, col: float) -> Tuple[float, float]:
        return (
            self.x_range[0] + (row + 0.5) * self.resolution,
            self.y_range[0] + (col + 0.5) * self.resolution,
        )

    def cell_centers(self) -> np.ndarray:
        """rows x cols x 2 array of (x, y) cell centers."""
        xs = self.x_range[0] + (np.arange(self.rows) + 0.5) * self.resolution
        ys = self.y_range[0] + (np.arange(self.cols) + 0.5) * self.resolution
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx, gy], axis=-1)

    def contains(self, x: float, y: float) -> bool:
        return (self.x_range[0] <= x < self.x_range[1]) and (self.y_range[0] <= y < self.y_range[1])

    def to_dict(self) -> dict:
        return {
            "x_range": list(self.x_range),
            "y_range": list(self.y_range),
            "resolution": self.resolution,
            "channels": self.channels,
        }


def bev_cells(xy: np.ndarray, spec: BevGridSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized cell lookup: (rows, cols, inside) for an N x 2 array."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    rows = np.floor((xy[:, 0] - spec.x_range[0]) / spec.resolution).astype(np.int64)
    cols = np.floor((xy[:, 1] - spec.y_range[0]) / spec.resolution).astype(np.int64)
    inside = (rows >= 0) & (rows < spec.rows) & (cols >= 0) & (cols < spec.cols)
    return rows, cols, inside


def bev_cell_of(xy: Sequence[float], spec: BevGridSpec) -> Optional[Tuple[int, int]]:
    """Floor-quantized (row, col) of a position, or None outside the extent."""
    rows, cols, inside = bev_cells(np.asarray(xy, dtype=np.float64)[:2], spec)
    if not inside[0]:
        return None
    return int(rows[0]), int(cols[0])


# ==================
# Polar
# ==================

@dataclass(frozen=True)
class PolarCoord:
    range: float
    azimuth: float


def to_polar(xy: Sequence[float]) -> PolarCoord:
    x, y = float(xy[0]), float(xy[1])
    if x == 0.0 and y == 0.0:
        return PolarCoord(0.0, 0.0)
    return PolarCoord(math.hypot(x, y), wrap_angle(math.atan2(y, x)))


def from_polar(p: PolarCoord) -> np.ndarray:
    return np.array([p.range * math.cos(p.azimuth), p.range * math.sin(p.azimuth)])


def decompose_velocity(v_pred: Sequence[float], center: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split a velocity into tangential and radial parts relative to the line
    of sight from the ego origin to center.

    Returns:
        (v_tan, v_rad)
    """
    c = np.asarray(center, dtype=np.float64)[:2]
    v = np.asarray(v_pred, dtype=np.float64)[:2]
    norm = math.hypot(c[0], c[1])
    if norm < DEGENERATE_CENTER:
        raise GeometryError(f"center {c.tolist()} is too close to the ego origin")
    c_hat = c / norm
    v_rad = float(v @ c_hat) * c_hat
    return v - v_rad, v_rad


# ==================
# Rigid transforms
# ==================

def check_rotation(rotation: np.ndarray, what: str = "rotation") -> np.ndarray:
    r = np.asarray(rotation, dtype=np.float64)
    if r.shape != (3, 3):
        raise GeometryError(f"{what} must be 3 x 3, got {r.shape}")
    if not np.isfinite(r).all() or np.abs(r @ r.T - np.eye(3)).max() > ORTHONORMAL_TOL:
        raise GeometryError(f"{what} is not orthonormal within {ORTHONORMAL_TOL}")
    return r


def yaw_rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class RigidTransform:
    """p' = R p + t."""
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", check_rotation(self.rotation))
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an N x 3 array of positions."""
        return np.asarray(points, dtype=np.float64).reshape(-1, 3) @ self.rotation.T + self.translation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate N x 3 direction vectors (no translation)."""
        return np.asarray(vectors, dtype=np.float64).reshape(-1, 3) @ self.rotation.T

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "RigidTransform":
        return cls(np.array(data["rotation"]), np.array(data["translation"]))
