"""
Center-heatmap detection head: per-cell class scores and box regression,
3 x 3 local-maximum peak picking, decoding into proposals.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.bev.feature_map import BevFeatureMap
from src.errors import ShapeError
from src.geometry.boxes import Box3D
from src.geometry.frames import BevGridSpec, wrap_angle
from src.tensor import ops
from src.tensor.mlp import MlpParams, mlp_forward
from src.tensor.params import ParamStore
from src.tensor.tensor import Tensor

from config.settings import CLASSES, REGRESSION_WIDTH

logger = logging.getLogger(__name__)

LOG_SIZE_LIMIT = 6.0


@dataclass(frozen=True)
class Proposal:
    center: Tuple[float, float, float]
    size: Tuple[float, float, float]
    yaw: float
    velocity: Tuple[float, float]
    score: float
    class_id: int
    latent: Tensor   # BEV feature at the proposal's cell

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))
        if min(self.size) <= 0:
            raise ShapeError(f"proposal size must be positive, got {self.size}")
        if not 0.0 <= self.score <= 1.0:
            raise ShapeError(f"proposal score {self.score} is outside [0, 1]")

    @property
    def label(self) -> str:
        return CLASSES[self.class_id]

    @property
    def box(self) -> Box3D:
        return Box3D(self.center, self.size, self.yaw, self.velocity, self.label)

    def moved(self, **changes) -> "Proposal":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        """Detection record (no latent)."""
        return {**self.box.to_dict(), "score": self.score}


@dataclass(frozen=True)
class HeadParams:
    heatmap_mlp: MlpParams      # C -> hidden -> K
    regression_mlp: MlpParams   # C -> hidden -> 10

    @classmethod
    def build(cls, store: ParamStore, channels: int, hidden: int,
              n_classes: int = len(CLASSES), prefix: str = "head") -> "HeadParams":
        return cls(
            heatmap_mlp=store.mlp(f"{prefix}.heatmap", [channels, hidden, n_classes]),
            regression_mlp=store.mlp(f"{prefix}.regression", [channels, hidden, REGRESSION_WIDTH]),
        )


def head_outputs(bev: BevFeatureMap, params: HeadParams) -> Tuple[Tensor, Tensor]:
    """(heatmap logits H x W x K, regression H x W x 10)."""
    return mlp_forward(params.heatmap_mlp, bev.values), mlp_forward(params.regression_mlp, bev.values)


def find_peaks(scores: np.ndarray, max_n: int) -> np.ndarray:
    """
    Cells that are maximal in their 3 x 3 neighborhood, per class.

    Returns:
        max_n x 3 array of (row, col, class), best score first; equal scores
        are ordered by class, then row, then column
    """
    if max_n <= 0:
        return np.zeros((0, 3), dtype=np.int64)
    padded = np.pad(scores, ((1, 1), (1, 1), (0, 0)), constant_values=-np.inf)
    neighborhood = sliding_window_view(padded, (3, 3), axis=(0, 1)).max(axis=(-2, -1))
    rows, cols, classes = np.nonzero(scores >= neighborhood)
    values = scores[rows, cols, classes]
    order = np.lexsort((cols, rows, classes, -values))[:max_n]
    return np.column_stack([rows[order], cols[order], classes[order]])


def decode_cell(regression: np.ndarray, row: int, col: int, spec: BevGridSpec) -> dict:
    dx, dy, z, lw, ll, lh, s, c, vx, vy = (float(v) for v in regression)
    sizes = np.exp(np.clip([lw, ll, lh], -LOG_SIZE_LIMIT, LOG_SIZE_LIMIT))
    return {
        "center": (
            spec.x_range[0] + (row + dx) * spec.resolution,
            spec.y_range[0] + (col + dy) * spec.resolution,
            z,
        ),
        "size": tuple(float(v) for v in sizes),
        "yaw": math.atan2(s, c),
        "velocity": (vx, vy),
    }


def decode(scores: np.ndarray, regression: np.ndarray, latent: Tensor,
           spec: BevGridSpec, max_n: int) -> List[Proposal]:
    """Turn head outputs into at most max_n proposals."""
    H, W, _ = scores.shape
    if regression.shape != (H, W, REGRESSION_WIDTH):
        raise ShapeError(f"regression map {regression.shape} does not match scores {scores.shape}")
    peaks = find_peaks(scores, max_n)
    flat = ops.reshape(latent, (H * W, latent.shape[-1]))
    proposals = []
    for row, col, k in peaks:
        fields = decode_cell(regression[row, col], row, col, spec)
        cell_feature = ops.reshape(ops.take(flat, [row * W + col], axis=0), (latent.shape[-1],))
        proposals.append(Proposal(
            score=float(scores[row, col, k]),
            class_id=int(k),
            latent=cell_feature,
            **fields,
        ))
    return proposals


def propose(bev: BevFeatureMap, params: HeadParams, max_n: int) -> List[Proposal]:
    logits, regression = head_outputs(bev, params)
    scores = ops.sigmoid(logits).data
    proposals = decode(scores, regression.data, bev.values, bev.spec, max_n)
    logger.debug(f"[head] {len(proposals)} proposals (max {max_n})")
    return proposals
