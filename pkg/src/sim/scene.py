"""
Deterministic synthetic scenes: ground-truth boxes, multi-sweep radar with
line-of-sight noise, and camera feature rasters.

Every component draws from its own child of the scene seed (boxes, radar,
clutter, features), so changing one component's settings never changes what
the others sample.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.errors import ConfigError
from src.geometry.boxes import Box3D, bev_corners
from src.geometry.camera import CameraModel
from src.geometry.frames import BevGridSpec, RigidTransform
from src.radar.points import RadarPoint, RadarSweep, accumulate_sweeps
from src.sim.rig import surround_rig

from config.settings import (
    BEV_CHANNELS,
    BEV_RESOLUTION,
    BEV_X_RANGE,
    BEV_Y_RANGE,
    CAMERA_LEVELS,
    CLASSES,
    RADAR_MAX_SWEEPS,
    RADAR_SWEEP_PERIOD,
    SIM_CLASS_RCS,
    SIM_CLASS_SIZES,
    SIM_CLASS_SPEED,
    SIM_CLUTTER,
    SIM_DOPPLER_NOISE,
    SIM_EDGE_MARGIN,
    SIM_FEATURE_NOISE,
    SIM_MIN_RANGE,
    SIM_OBJECTS,
    SIM_RADIAL_NOISE,
    SIM_RETURNS_PER_BOX,
    SIM_SWEEPS,
    SIM_TANGENTIAL_RATIO,
)

logger = logging.getLogger(__name__)

STREAMS = ("boxes", "radar", "clutter", "features")


def _default_spec() -> BevGridSpec:
    return BevGridSpec(BEV_X_RANGE, BEV_Y_RANGE, BEV_RESOLUTION, BEV_CHANNELS)


@dataclass(frozen=True)
class SimConfig:
    spec: BevGridSpec = field(default_factory=_default_spec)
    objects: Tuple[int, int] = SIM_OBJECTS
    returns_per_box: Tuple[int, int] = SIM_RETURNS_PER_BOX
    clutter: Tuple[int, int] = SIM_CLUTTER
    sweeps: int = SIM_SWEEPS
    sweep_period: float = RADAR_SWEEP_PERIOD
    radial_noise: float = SIM_RADIAL_NOISE
    tangential_ratio: float = SIM_TANGENTIAL_RATIO
    doppler_noise: float = SIM_DOPPLER_NOISE
    feature_noise: float = SIM_FEATURE_NOISE
    min_range: float = SIM_MIN_RANGE
    edge_margin: float = SIM_EDGE_MARGIN
    levels: int = CAMERA_LEVELS

    def __post_init__(self):
        for name in ("objects", "returns_per_box", "clutter"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ConfigError(f"sim {name} range must satisfy 0 <= min <= max, got {(lo, hi)}")
        if not 1 <= self.sweeps <= RADAR_MAX_SWEEPS:
            raise ConfigError(f"sim sweeps must be in [1, {RADAR_MAX_SWEEPS}], got {self.sweeps}")
        for name in ("radial_noise", "tangential_ratio", "doppler_noise", "feature_noise", "sweep_period"):
            if getattr(self, name) < 0:
                raise ConfigError(f"sim {name} must be >= 0")
        x_lo, x_hi = self.spec.x_range[0] + self.edge_margin, self.spec.x_range[1] - self.edge_margin
        y_lo, y_hi = self.spec.y_range[0] + self.edge_margin, self.spec.y_range[1] - self.edge_margin
        if x_lo >= x_hi or y_lo >= y_hi:
            raise ConfigError("sim edge margin leaves no room for objects")
        if math.hypot(max(abs(x_lo), abs(x_hi)), max(abs(y_lo), abs(y_hi))) <= self.min_range:
            raise ConfigError(f"no position in the extent is {self.min_range} m from the ego vehicle")

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "objects": list(self.objects),
            "returns_per_box": list(self.returns_per_box),
            "clutter": list(self.clutter),
            "sweeps": self.sweeps,
            "sweep_period": self.sweep_period,
            "radial_noise": self.radial_noise,
            "tangential_ratio": self.tangential_ratio,
            "doppler_noise": self.doppler_noise,
            "feature_noise": self.feature_noise,
            "min_range": self.min_range,
            "edge_margin": self.edge_margin,
            "levels": self.levels,
        }


@dataclass(frozen=True)
class SceneRecord:
    scene_id: str
    gt: Tuple[Box3D, ...]
    sweeps: Tuple[RadarSweep, ...]
    cameras: Tuple[CameraModel, ...]
    features: Tuple[Tuple[np.ndarray, ...], ...]   # per camera, per level: H x W x C
    seed: int

    @property
    def current_time(self) -> float:
        return max((s.timestamp for s in self.sweeps), default=0.0)

    def radar_points(self) -> List[RadarPoint]:
        """All sweeps in the current frame, newest first."""
        return accumulate_sweeps(self.sweeps, self.current_time)


def scene_streams(seed: int) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


# ==================
# Boxes
# ==================

def sample_boxes(config: SimConfig, rng: np.random.Generator) -> List[Box3D]:
    spec, m = config.spec, config.edge_margin
    n = int(rng.integers(config.objects[0], config.objects[1] + 1))
    boxes = []
    for _ in range(n):
        label = CLASSES[int(rng.integers(len(CLASSES)))]
        size = tuple(float(s * rng.uniform(0.9, 1.1)) for s in SIM_CLASS_SIZES[label])
        while True:
            x = float(rng.uniform(spec.x_range[0] + m, spec.x_range[1] - m))
            y = float(rng.uniform(spec.y_range[0] + m, spec.y_range[1] - m))
            if math.hypot(x, y) >= config.min_range:
                break
        yaw = float(rng.uniform(-math.pi, math.pi))
        speed = float(rng.uniform(0.0, SIM_CLASS_SPEED[label]))
        boxes.append(Box3D((x, y, size[2] / 2), size, yaw, (speed * math.cos(yaw), speed * math.sin(yaw)), label))
    return boxes


# ==================
# Radar
# ==================

def visible_surface_points(box: Box3D, center_xy: Sequence[float], n: int,
                           rng: np.random.Generator) -> np.ndarray:
    """n points on the box faces that look toward the ego origin."""
    corners = bev_corners(box, center_xy)
    starts, ends = corners, np.roll(corners, -1, axis=0)
    edges = ends - starts
    normals = np.column_stack([edges[:, 1], -edges[:, 0]])      # outward for counter-clockwise corners
    mids = (starts + ends) / 2
    facing = (normals * -mids).sum(axis=1) > 0
    if not facing.any():
        facing[:] = True
    lengths = np.hypot(edges[:, 0], edges[:, 1]) * facing
    chosen = rng.choice(4, size=n, p=lengths / lengths.sum())
    t = rng.uniform(size=n)
    xy = starts[chosen] + t[:, None] * edges[chosen]
    bottom = box.center[2] - box.size[2] / 2
    z = bottom + rng.uniform(size=n) * box.size[2]
    return np.column_stack([xy, z])


def line_of_sight(xy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(radial, tangential) unit vectors for each N x 2 position."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    r = np.maximum(np.hypot(xy[:, 0], xy[:, 1]), 1e-9)[:, None]
    radial = xy / r
    return radial, np.column_stack([-radial[:, 1], radial[:, 0]])


def polar_noise(xy: np.ndarray, rng: np.random.Generator, sigma_r: float, ratio: float) -> np.ndarray:
    """N x 2 offsets: sigma_r along the line of sight, ratio * sigma_r across it."""
    radial, tangential = line_of_sight(xy)
    n = len(radial)
    along = rng.normal(0.0, sigma_r, n)
    across = rng.normal(0.0, sigma_r * ratio, n)
    return along[:, None] * radial + across[:, None] * tangential


def box_returns(box: Box3D, age: float, n: int, config: SimConfig,
                rng: np.random.Generator) -> List[RadarPoint]:
    center_xy = np.array(box.center[:2]) - age * np.array(box.velocity)
    surface = visible_surface_points(box, center_xy, n, rng)
    surface[:, :2] += polar_noise(surface[:, :2], rng, config.radial_noise, config.tangential_ratio)
    radial, _ = line_of_sight(surface[:, :2])
    doppler = radial @ np.array(box.velocity) + rng.normal(0.0, config.doppler_noise, n)
    rcs = SIM_CLASS_RCS[box.label] + rng.normal(0.0, 2.0, n)
    return [
        RadarPoint(tuple(float(v) for v in surface[k]), float(rcs[k]),
                   (float(doppler[k] * radial[k, 0]), float(doppler[k] * radial[k, 1])))
        for k in range(n)
    ]


def clutter_returns(config: SimConfig, rng: np.random.Generator) -> List[RadarPoint]:
    spec = config.spec
    n = int(rng.integers(config.clutter[0], config.clutter[1] + 1))
    xy = np.column_stack([
        rng.uniform(spec.x_range[0], spec.x_range[1], n),
        rng.uniform(spec.y_range[0], spec.y_range[1], n),
    ])
    z = rng.uniform(0.0, 2.0, n)
    rcs = rng.normal(-5.0, 3.0, n)
    radial, _ = line_of_sight(xy)
    doppler = rng.normal(0.0, config.doppler_noise, n)
    return [
        RadarPoint((float(xy[k, 0]), float(xy[k, 1]), float(z[k])), float(rcs[k]),
                   (float(doppler[k] * radial[k, 0]), float(doppler[k] * radial[k, 1])))
        for k in range(n)
    ]


def simulate_sweeps(boxes: Sequence[Box3D], config: SimConfig, radar_rng: np.random.Generator,
                    clutter_rng: np.random.Generator) -> List[RadarSweep]:
    """Newest sweep at time 0; older sweeps see the objects where they were."""
    lo, hi = config.returns_per_box
    sweeps = []
    for s in range(config.sweeps):
        age = s * config.sweep_period
        points: List[RadarPoint] = []
        for box in boxes:
            points.extend(box_returns(box, age, int(radar_rng.integers(lo, hi + 1)), config, radar_rng))
        points.extend(clutter_returns(config, clutter_rng))
        sweeps.append(RadarSweep(tuple(points), RigidTransform.identity(), 0.0 - age))
    return sweeps


# ==================
# Camera features
# ==================

def class_pattern(class_id: int, channels: int) -> np.ndarray:
    """Channels c with c % K == class_id light up."""
    return (np.arange(channels) % len(CLASSES) == class_id).astype(np.float64)


def render_features(boxes: Sequence[Box3D], cameras: Sequence[CameraModel], config: SimConfig,
                    rng: np.random.Generator) -> List[Tuple[np.ndarray, ...]]:
    """Gaussian splats at projected box centers, rounded to fp32."""
    C = config.spec.channels
    out = []
    for cam in cameras:
        levels = []
        for level in range(config.levels):
            w, h = cam.feature_size(level)
            fmap = np.zeros((h, w, C))
            rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
            focal = cam.intrinsics[0, 0] * cam.feature_scale[level]
            for box in boxes:
                uv, depth, valid = cam.project_points(np.array(box.center), level)
                if not valid[0]:
                    continue
                sigma = max(0.5, focal * max(box.size[0], box.size[1]) / (4.0 * depth[0]))
                g = np.exp(-((cols - uv[0, 0]) ** 2 + (rows - uv[0, 1]) ** 2) / (2.0 * sigma ** 2))
                fmap += g[..., None] * class_pattern(box.class_id, C)
            fmap += rng.normal(0.0, config.feature_noise, fmap.shape)
            levels.append(fmap.astype(np.float32).astype(np.float64))
        out.append(tuple(levels))
    return out


def generate_scene(config: SimConfig, seed: int, scene_id: Optional[str] = None) -> SceneRecord:
    """Pure function of (config, seed)."""
    streams = scene_streams(seed)
    boxes = sample_boxes(config, streams["boxes"])
    sweeps = simulate_sweeps(boxes, config, streams["radar"], streams["clutter"])
    cameras = surround_rig()
    features = render_features(boxes, cameras, config, streams["features"])
    scene_id = scene_id or f"scene_{seed}"
    logger.debug(
        f"[sim] {scene_id}: {len(boxes)} boxes, {sum(len(s.points) for s in sweeps)} returns "
        f"over {len(sweeps)} sweeps"
    )
    return SceneRecord(scene_id, tuple(boxes), tuple(sweeps), tuple(cameras), tuple(features), int(seed))
