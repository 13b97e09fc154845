"""
Grid point generation for proposal refinement.

The default sampler spreads T points along the proposal's tangential
velocity around every associated return, with spacing that grows with the
tangential speed. Two alternatives are available for comparison: a fixed
lattice inside the box and the returns themselves with no virtual points.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Sequence, Type

import numpy as np

from src.errors import ConfigError, ContractError, GeometryError
from src.geometry.frames import decompose_velocity
from src.head.proposals import Proposal

from config.settings import FIXED_GRID_SIDE

logger = logging.getLogger(__name__)

STILL_SPEED = 1e-9


@dataclass(frozen=True)
class GridPoints:
    """N grid points: position (z from the proposal center), source return k and slot t."""
    positions: np.ndarray   # N x 3
    source: np.ndarray      # N, -1 for points not tied to a return
    slot: np.ndarray        # N

    def __len__(self) -> int:
        return len(self.positions)


def yaw_normal(yaw: float) -> np.ndarray:
    """Unit vector perpendicular to the heading."""
    return np.array([-math.sin(yaw), math.cos(yaw)])


def gen_grid_points(u_k: Sequence[float], v_tan: Sequence[float], T: int, rho_min: float,
                    rho_max: float, fallback: Sequence[float] = (0.0, 1.0)) -> np.ndarray:
    """
    T points centered on u_k along the tangential direction.

        gamma = clamp(|v_tan|, rho_min, rho_max)
        g_t   = u_k + gamma * (t / (T - 1) - 1/2) * v_tan / |v_tan|

    When |v_tan| is below STILL_SPEED the direction is fallback and
    gamma = rho_min.

    Returns:
        T x 2 array of (x, y)
    """
    if T < 2:
        raise ContractError(f"grid generation needs T >= 2, got {T}")
    u = np.asarray(u_k, dtype=np.float64)[:2]
    v = np.asarray(v_tan, dtype=np.float64)[:2]
    speed = math.hypot(v[0], v[1])
    if speed < STILL_SPEED:
        direction = np.asarray(fallback, dtype=np.float64)
        gamma = rho_min
    else:
        direction = v / speed
        gamma = min(max(speed, rho_min), rho_max)
    t = np.arange(T) / (T - 1) - 0.5
    return u + gamma * t[:, None] * direction


class GridSampler(ABC):
    """Turns a proposal and its associated return positions into candidate grid points."""

    MODE: str = "unknown"

    def __init__(self, T: int, rho_min: float, rho_max: float, fixed_side: int = FIXED_GRID_SIDE):
        self.T = T
        self.rho_min = rho_min
        self.rho_max = rho_max
        self.fixed_side = fixed_side

    @abstractmethod
    def sample(self, proposal: Proposal, positions: np.ndarray) -> GridPoints:
        """positions is the K x 3 array of associated return positions."""
        pass


class AdaptiveGridSampler(GridSampler):
    MODE = "adaptive"

    def tangential_velocity(self, proposal: Proposal) -> np.ndarray:
        try:
            v_tan, _ = decompose_velocity(proposal.velocity, proposal.center)
        except GeometryError:
            return np.zeros(2)
        return v_tan

    def sample(self, proposal, positions):
        v_tan = self.tangential_velocity(proposal)
        fallback = yaw_normal(proposal.yaw)
        xy = np.concatenate([
            gen_grid_points(u, v_tan, self.T, self.rho_min, self.rho_max, fallback)
            for u in positions
        ]) if len(positions) else np.zeros((0, 2))
        K = len(positions)
        return GridPoints(
            np.column_stack([xy, np.full(len(xy), proposal.center[2])]),
            np.repeat(np.arange(K), self.T),
            np.tile(np.arange(self.T), K),
        )


class FixedGridSampler(GridSampler):
    """side x side lattice over the box footprint, length along the heading."""
    MODE = "fixed"

    def sample(self, proposal, positions):
        n = self.fixed_side
        w, l, _ = proposal.size
        steps = (np.arange(n) + 0.5) / n - 0.5
        along, across = np.meshgrid(steps * l, steps * w, indexing="ij")
        c, s = math.cos(proposal.yaw), math.sin(proposal.yaw)
        x = proposal.center[0] + c * along.reshape(-1) - s * across.reshape(-1)
        y = proposal.center[1] + s * along.reshape(-1) + c * across.reshape(-1)
        count = n * n
        return GridPoints(
            np.column_stack([x, y, np.full(count, proposal.center[2])]),
            np.full(count, -1),
            np.arange(count),
        )


class RadarGridSampler(GridSampler):
    """No virtual points: the associated returns are the grid."""
    MODE = "radar"

    def sample(self, proposal, positions):
        K = len(positions)
        xy = np.asarray(positions, dtype=np.float64).reshape(-1, 3)[:, :2]
        return GridPoints(
            np.column_stack([xy, np.full(K, proposal.center[2])]),
            np.arange(K),
            np.zeros(K, dtype=np.int64),
        )


SUPPORTED_SAMPLERS: Dict[str, Type[GridSampler]] = {
    AdaptiveGridSampler.MODE: AdaptiveGridSampler,
    FixedGridSampler.MODE: FixedGridSampler,
    RadarGridSampler.MODE: RadarGridSampler,
}


def make_sampler(mode: str, T: int, rho_min: float, rho_max: float,
                 fixed_side: int = FIXED_GRID_SIDE) -> GridSampler:
    sampler = SUPPORTED_SAMPLERS.get(mode)
    if sampler is None:
        raise ConfigError(f"unknown grid mode '{mode}', expected one of {sorted(SUPPORTED_SAMPLERS)}")
    return sampler(T, rho_min, rho_max, fixed_side)
