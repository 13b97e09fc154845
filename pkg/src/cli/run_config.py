"""
Run configuration.

Defaults come from config/settings.py; a run overrides them with a flat JSON
key -> value file. Keys starting with "_" are notes and are ignored.
"""

import dataclasses
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

from src.errors import ConfigError
from src.geometry.frames import BevGridSpec
from src.refine.association import AssociationConfig
from src.refine.grid import SUPPORTED_SAMPLERS
from src.sim.scene import SimConfig

from config.settings import (
    ATTN_SAMPLES,
    BEV_CHANNELS,
    BEV_RESOLUTION,
    BEV_X_RANGE,
    BEV_Y_RANGE,
    CAMERA_LEVELS,
    DB_PATH,
    DEFAULT_SEED,
    ENCODER_LAYERS,
    FFN_EXPANSION,
    FIXED_GRID_SIDE,
    GRID_MODE,
    GRID_PER_POINT,
    GRID_SELECTED,
    HEAD_HIDDEN,
    LEARNING_RATE,
    LR_DECAY_FACTOR,
    LR_DECAY_STEP,
    MAX_PROPOSALS,
    MLP0_LAYERS,
    OUTPUT_DIR,
    POS_ENC_FREQS,
    RADAR_CONV_LAYERS,
    RADAR_MLP_LAYERS,
    REFINE_HIDDEN,
    REFINE_JITTER,
    REFINE_LOSS_WEIGHT,
    REFINE_PROPOSALS_PER_SCENE,
    REG_LOSS_WEIGHT,
    RHO_MAX,
    RHO_MIN,
    SCA_HEIGHTS,
    SCA_Z_RANGE,
    SCENES_DIR,
    SETABS_RADII,
    SIM_CLUTTER,
    SIM_DOPPLER_NOISE,
    SIM_FEATURE_NOISE,
    SIM_OBJECTS,
    SIM_RADIAL_NOISE,
    SIM_RETURNS_PER_BOX,
    SIM_SWEEPS,
    SIM_TANGENTIAL_RATIO,
    SPA_AZIMUTH_DEG,
    SPA_RADIAL,
    TRAIN_STEPS,
    WORKERS,
)

logger = logging.getLogger(__name__)

STAGES = ("rgbq", "rcg", "rgpp", "pra")

# Execution and path settings never change an artifact, so they stay out of the hash.
HASH_EXCLUDE = ("workers", "scenes_dir", "out_dir", "db_path")


@dataclass(frozen=True)
class RunConfig:
    # BEV grid
    x_range: Tuple[float, float] = BEV_X_RANGE
    y_range: Tuple[float, float] = BEV_Y_RANGE
    resolution: float = BEV_RESOLUTION
    channels: int = BEV_CHANNELS

    # radar encoder
    radar_hidden: int = BEV_CHANNELS
    radar_mlp_layers: int = RADAR_MLP_LAYERS
    radar_conv_layers: int = RADAR_CONV_LAYERS

    # BEV encoder
    layers: int = ENCODER_LAYERS
    samples: int = ATTN_SAMPLES
    levels: int = CAMERA_LEVELS
    heights: int = SCA_HEIGHTS
    z_range: Tuple[float, float] = SCA_Z_RANGE
    mlp0_layers: int = MLP0_LAYERS
    ffn_expansion: int = FFN_EXPANSION

    # head
    head_hidden: int = HEAD_HIDDEN
    max_proposals: int = MAX_PROPOSALS

    # refinement
    T: int = GRID_PER_POINT
    M: int = GRID_SELECTED
    rho_min: float = RHO_MIN
    rho_max: float = RHO_MAX
    grid_mode: str = GRID_MODE
    fixed_side: int = FIXED_GRID_SIDE
    spa_azimuth_deg: float = SPA_AZIMUTH_DEG
    spa_radial: float = SPA_RADIAL
    setabs_radii: Tuple[float, ...] = SETABS_RADII
    pos_enc_freqs: int = POS_ENC_FREQS
    refine_hidden: int = REFINE_HIDDEN

    # ablation stages
    rgbq: bool = True
    rcg: bool = True
    rgpp: bool = True
    pra: bool = True

    # training
    seed: int = DEFAULT_SEED
    steps: int = TRAIN_STEPS
    lr: float = LEARNING_RATE
    lr_decay_step: int = LR_DECAY_STEP
    lr_decay_factor: float = LR_DECAY_FACTOR
    reg_weight: float = REG_LOSS_WEIGHT
    refine_weight: float = REFINE_LOSS_WEIGHT
    refine_jitter: float = REFINE_JITTER
    refine_proposals: int = REFINE_PROPOSALS_PER_SCENE

    # simulator
    sim_objects: Tuple[int, int] = SIM_OBJECTS
    sim_returns: Tuple[int, int] = SIM_RETURNS_PER_BOX
    sim_clutter: Tuple[int, int] = SIM_CLUTTER
    sim_sweeps: int = SIM_SWEEPS
    radial_noise: float = SIM_RADIAL_NOISE
    tangential_ratio: float = SIM_TANGENTIAL_RATIO
    doppler_noise: float = SIM_DOPPLER_NOISE
    feature_noise: float = SIM_FEATURE_NOISE

    # execution and paths
    workers: int = WORKERS
    scenes_dir: str = SCENES_DIR
    out_dir: str = OUTPUT_DIR
    db_path: str = DB_PATH

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                object.__setattr__(self, f.name, tuple(value))
        self.validate()

    # ==================
    # Validation
    # ==================

    def validate(self) -> None:
        spec = self.spec
        for name in ("layers", "samples", "levels", "heights", "M", "channels", "radar_hidden",
                     "head_hidden", "refine_hidden", "radar_mlp_layers", "mlp0_layers",
                     "ffn_expansion", "pos_enc_freqs", "fixed_side", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("steps", "radar_conv_layers", "max_proposals", "refine_proposals", "lr_decay_step"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.T < 2:
            raise ConfigError(f"T must be >= 2, got {self.T}")
        if not self.rho_min < self.rho_max:
            raise ConfigError(f"rho_min ({self.rho_min}) must be below rho_max ({self.rho_max})")
        if self.rho_min <= 0:
            raise ConfigError("rho_min must be positive")
        if self.grid_mode not in SUPPORTED_SAMPLERS:
            raise ConfigError(f"unknown grid_mode '{self.grid_mode}', expected one of {sorted(SUPPORTED_SAMPLERS)}")
        if self.spa_azimuth_deg <= 0 or self.spa_radial <= 0:
            raise ConfigError("SPA windows must be positive")
        if not self.setabs_radii or min(self.setabs_radii) <= 0:
            raise ConfigError("setabs_radii must be a non-empty list of positive radii")
        if spec.channels % len(self.setabs_radii):
            raise ConfigError(f"channels {spec.channels} do not split over {len(self.setabs_radii)} SetAbs radii")
        if self.lr <= 0 or not math.isfinite(self.lr):
            raise ConfigError(f"lr must be a positive number, got {self.lr}")
        if not self.z_range[0] < self.z_range[1]:
            raise ConfigError(f"z_range must be increasing, got {self.z_range}")
        if self.pra and not self.rgpp:
            raise ConfigError("pra requires rgpp: attended radar features feed the instance stage")
        self.sim_config()

    # ==================
    # Derived settings
    # ==================

    @property
    def spec(self) -> BevGridSpec:
        return BevGridSpec(tuple(self.x_range), tuple(self.y_range), self.resolution, self.channels)

    @property
    def reference_heights(self) -> Tuple[float, ...]:
        if self.heights == 1:
            return (float(sum(self.z_range) / 2),)
        return tuple(float(z) for z in np.linspace(self.z_range[0], self.z_range[1], self.heights))

    @property
    def stages(self) -> Tuple[str, ...]:
        return tuple(s for s in STAGES if getattr(self, s))

    def association(self) -> AssociationConfig:
        return AssociationConfig.from_degrees(self.spa_azimuth_deg, self.spa_radial)

    def sim_config(self) -> SimConfig:
        return SimConfig(
            spec=self.spec,
            objects=tuple(self.sim_objects),
            returns_per_box=tuple(self.sim_returns),
            clutter=tuple(self.sim_clutter),
            sweeps=self.sim_sweeps,
            radial_noise=self.radial_noise,
            tangential_ratio=self.tangential_ratio,
            doppler_noise=self.doppler_noise,
            feature_noise=self.feature_noise,
            levels=self.levels,
        )

    def with_stages(self, enabled: Iterable[str]) -> "RunConfig":
        """Copy with exactly the named stages switched on."""
        enabled = {s.strip() for s in enabled if s.strip()}
        unknown = enabled - set(STAGES)
        if unknown:
            raise ConfigError(f"unknown stages {sorted(unknown)}, expected a subset of {list(STAGES)}")
        return self.replace(**{s: s in enabled for s in STAGES})

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    # ==================
    # Serialization
    # ==================

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    def dump(self) -> str:
        """Effective configuration, one sorted `key = value` line per setting."""
        return "\n".join(f"{k} = {json.dumps(v)}" for k, v in sorted(self.to_dict().items()))

    def config_hash(self) -> str:
        data = {k: v for k, v in self.to_dict().items() if k not in HASH_EXCLUDE}
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("run configuration must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        values = {}
        for key, value in data.items():
            if key.startswith("_"):
                continue
            if key not in names:
                raise ConfigError(f"unknown configuration key '{key}'")
            values[key] = _coerce(key, value, getattr(cls, key))
        return cls(**values)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        if not os.path.exists(path):
            raise ConfigError(f"configuration file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} is not valid JSON: {e}")
        config = cls.from_dict(data)
        logger.debug(f"[config] loaded {path} ({config.config_hash()[:12]})")
        return config


def _coerce(key: str, value, default):
    """Check value against the type of its default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"'{key}' must be true or false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"'{key}' must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"'{key}' must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"'{key}' must be a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or (default and len(value) != len(default) and key != "setabs_radii"):
            raise ConfigError(f"'{key}' must be a list like {list(default)}, got {value!r}")
        kind = int if default and all(isinstance(v, int) for v in default) else float
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not isinstance(v, int)):
                raise ConfigError(f"'{key}' entries must be {kind.__name__}s, got {value!r}")
        return tuple(kind(v) for v in value)
    return value
