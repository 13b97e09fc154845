"""
Instance-level refinement of head proposals.

Per proposal:
    associate returns -> attend them -> grid points -> FPS to M ->
    set abstraction + image pooling per grid point -> max over grid points ->
    refine head on [object feature ; proposal latent] -> residuals

Proposals with no associated return are passed through unchanged.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from src.camera.features import CameraFeatures
from src.errors import ContractError
from src.geometry.boxes import Box3D
from src.geometry.frames import wrap_angle
from src.head.proposals import LOG_SIZE_LIMIT, Proposal
from src.radar.points import RadarPoint, points_to_array
from src.refine.association import AssociationConfig, soft_polar_associate
from src.refine.attention import PointAttentionParams, proposal_radar_attention
from src.refine.fps import fps
from src.refine.grid import GridSampler, make_sampler
from src.refine.pooling import SetAbsParams, pool_image_features, set_abstraction
from src.tensor import ops
from src.tensor.mlp import MlpParams, mlp_forward
from src.tensor.params import ParamStore
from src.tensor.tensor import Tensor

from config.settings import (
    FIXED_GRID_SIDE,
    GRID_MODE,
    GRID_PER_POINT,
    GRID_SELECTED,
    POS_ENC_FREQS,
    REFINE_WIDTH,
    RHO_MAX,
    RHO_MIN,
    SETABS_RADII,
)

logger = logging.getLogger(__name__)

# residual layout
RESIDUAL_FIELDS = ("dx", "dy", "dz", "dlog_w", "dlog_l", "dlog_h", "dyaw", "dvx", "dvy", "dscore")
BOX_RESIDUALS = 9
SCORE_CLIP = 1e-12


@dataclass(frozen=True)
class RefinementParams:
    attention: PointAttentionParams
    set_abs: SetAbsParams
    head: MlpParams        # 2C -> hidden -> 10, zero-initialized output layer
    T: int = GRID_PER_POINT
    M: int = GRID_SELECTED
    rho_min: float = RHO_MIN
    rho_max: float = RHO_MAX

    def __post_init__(self):
        if not self.rho_min < self.rho_max:
            raise ContractError(f"rho_min {self.rho_min} must be below rho_max {self.rho_max}")
        if self.T < 2:
            raise ContractError(f"T must be >= 2, got {self.T}")
        if self.M < 1:
            raise ContractError(f"M must be >= 1, got {self.M}")

    @classmethod
    def build(cls, store: ParamStore, channels: int, hidden: int, T: int = GRID_PER_POINT,
              M: int = GRID_SELECTED, rho_min: float = RHO_MIN, rho_max: float = RHO_MAX,
              radii: Sequence[float] = SETABS_RADII, freqs: int = POS_ENC_FREQS,
              prefix: str = "refine") -> "RefinementParams":
        return cls(
            attention=PointAttentionParams.build(store, f"{prefix}.pra", channels, hidden, freqs),
            set_abs=SetAbsParams.build(store, f"{prefix}.setabs", channels, channels, hidden, radii),
            head=store.mlp(f"{prefix}.head", [2 * channels, hidden, REFINE_WIDTH], last_init="zeros"),
            T=T, M=M, rho_min=rho_min, rho_max=rho_max,
        )


@dataclass(frozen=True)
class RefineOptions:
    association: AssociationConfig = field(default_factory=AssociationConfig)
    grid_mode: str = GRID_MODE
    attend: bool = True     # False: uniform 1/K weights instead of proposal-aware attention
    fixed_side: int = FIXED_GRID_SIDE

    def sampler(self, params: RefinementParams) -> GridSampler:
        return make_sampler(self.grid_mode, params.T, params.rho_min, params.rho_max, self.fixed_side)


# ==================
# Residuals
# ==================

def _logit(p: float) -> float:
    p = min(max(p, SCORE_CLIP), 1.0 - SCORE_CLIP)
    return math.log(p / (1.0 - p))


def apply_residuals(proposal: Proposal, residual: np.ndarray) -> Proposal:
    """Refined proposal; an all-zero residual returns identical fields."""
    r = np.asarray(residual, dtype=np.float64)
    center = tuple(c + d for c, d in zip(proposal.center, r[0:3]))
    size = tuple(
        s if d == 0.0 else s * math.exp(min(max(d, -LOG_SIZE_LIMIT), LOG_SIZE_LIMIT))
        for s, d in zip(proposal.size, r[3:6])
    )
    yaw = wrap_angle(proposal.yaw + r[6])
    velocity = (proposal.velocity[0] + r[7], proposal.velocity[1] + r[8])
    score = proposal.score
    if r[9] != 0.0:
        score = 1.0 / (1.0 + math.exp(-(_logit(score) + r[9])))
    return proposal.moved(
        center=tuple(float(v) for v in center),
        size=tuple(float(v) for v in size),
        yaw=float(yaw),
        velocity=(float(velocity[0]), float(velocity[1])),
        score=float(score),
    )


def residual_targets(proposal: Proposal, gt: Box3D) -> np.ndarray:
    """Box residuals that would move proposal onto gt (no score term)."""
    return np.array([
        gt.center[0] - proposal.center[0],
        gt.center[1] - proposal.center[1],
        gt.center[2] - proposal.center[2],
        math.log(gt.size[0] / proposal.size[0]),
        math.log(gt.size[1] / proposal.size[1]),
        math.log(gt.size[2] / proposal.size[2]),
        wrap_angle(gt.yaw - proposal.yaw),
        gt.velocity[0] - proposal.velocity[0],
        gt.velocity[1] - proposal.velocity[1],
    ])


# ==================
# Stage
# ==================

def object_feature(point_features: Tensor, image_features: Tensor) -> Tensor:
    """max over grid points of F_pts + F_img."""
    if point_features.shape != image_features.shape:
        raise ContractError(
            f"grid features disagree: points {point_features.shape}, image {image_features.shape}"
        )
    return ops.max_reduce(ops.add(point_features, image_features), axis=0)


def refine_residual(proposal: Proposal, point_features: Tensor, image_features: Tensor,
                    params: RefinementParams) -> Tensor:
    """Refine head output (10,) for one proposal."""
    if point_features.shape[0] < 1:
        raise ContractError("refinement needs at least one grid point")
    obj = object_feature(point_features, image_features)
    return mlp_forward(params.head, ops.concat([obj, proposal.latent], axis=0))


def fuse_and_refine(proposal: Proposal, point_features: Tensor, image_features: Tensor,
                    params: RefinementParams) -> Proposal:
    residual = refine_residual(proposal, point_features, image_features, params)
    return apply_residuals(proposal, residual.data)


def proposal_residual(proposal: Proposal, raw: np.ndarray, features: Sequence[CameraFeatures],
                      params: RefinementParams, options: RefineOptions,
                      sampler: Optional[GridSampler] = None) -> Optional[Tensor]:
    """
    Residual tensor for one proposal, or None when no return is associated.

    Args:
        raw: N x 7 matrix of all returns in the scene
    """
    idx = soft_polar_associate(proposal.center, raw, options.association)
    if len(idx) == 0:
        return None
    assoc = raw[idx]
    positions = assoc[:, 0:3]
    attended = proposal_radar_attention(proposal.center, assoc, params.attention, options.attend)

    sampler = sampler or options.sampler(params)
    grid = sampler.sample(proposal, positions)
    chosen = grid.positions[fps(grid.positions[:, :2], params.M, proposal.center[:2])]

    point_features = set_abstraction(attended, positions, chosen, params.set_abs)
    image_features = pool_image_features(chosen, features, params.set_abs.out_width)
    return refine_residual(proposal, point_features, image_features, params)


def refine(proposals: Sequence[Proposal], points: Sequence[RadarPoint],
           features: Sequence[CameraFeatures], params: RefinementParams,
           options: RefineOptions) -> List[Proposal]:
    """Refine every proposal independently; order is preserved."""
    raw = points_to_array(points)
    sampler = options.sampler(params)
    out = []
    bypassed = 0
    for proposal in proposals:
        residual = proposal_residual(proposal, raw, features, params, options, sampler)
        if residual is None:
            bypassed += 1
            out.append(proposal)
            continue
        out.append(apply_residuals(proposal, residual.data))
    logger.debug(f"[refine] {len(proposals) - bypassed} refined, {bypassed} without radar passed through")
    return out
