"""
Training targets and losses for the center-heatmap head.

Regression layout per cell:
    (dx, dy, z, log w, log l, log h, sin yaw, cos yaw, vx, vy)
dx and dy are the box center's offset inside its cell, in cells.
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.geometry.boxes import Box3D
from src.geometry.frames import BevGridSpec, bev_cell_of
from src.tensor import ops
from src.tensor.tensor import Tensor

from config.settings import CLASSES, FOCAL_ALPHA, FOCAL_BETA, REGRESSION_WIDTH

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HeadTargets:
    heatmap: np.ndarray      # H x W x K, peak 1.0 at each box's cell
    regression: np.ndarray   # H x W x 10
    mask: np.ndarray         # H x W, True where regression targets are written
    skipped: int             # boxes outside the extent

    @property
    def positives(self) -> int:
        return int((self.heatmap == 1.0).sum())


def splat_radius(box: Box3D, spec: BevGridSpec) -> int:
    return max(1, math.ceil(0.5 * max(box.size[0], box.size[1]) / spec.resolution))


def regression_target(box: Box3D, row: int, col: int, spec: BevGridSpec) -> np.ndarray:
    x, y, z = box.center
    w, l, h = box.size
    return np.array([
        (x - spec.x_range[0]) / spec.resolution - row,
        (y - spec.y_range[0]) / spec.resolution - col,
        z,
        math.log(w), math.log(l), math.log(h),
        math.sin(box.yaw), math.cos(box.yaw),
        box.velocity[0], box.velocity[1],
    ])


def encode_targets(gt: Sequence[Box3D], spec: BevGridSpec, n_classes: int = len(CLASSES)) -> HeadTargets:
    H, W = spec.rows, spec.cols
    heatmap = np.zeros((H, W, n_classes))
    regression = np.zeros((H, W, REGRESSION_WIDTH))
    mask = np.zeros((H, W), dtype=bool)
    skipped = 0
    for box in gt:
        cell = bev_cell_of(box.center, spec)
        if cell is None:
            skipped += 1
            continue
        i, j = cell
        r = splat_radius(box, spec)
        sigma = (2 * r + 1) / 6.0
        lo_i, hi_i = max(0, i - r), min(H, i + r + 1)
        lo_j, hi_j = max(0, j - r), min(W, j + r + 1)
        di = np.arange(lo_i, hi_i)[:, None] - i
        dj = np.arange(lo_j, hi_j)[None, :] - j
        g = np.exp(-(di ** 2 + dj ** 2) / (2.0 * sigma ** 2))
        patch = heatmap[lo_i:hi_i, lo_j:hi_j, box.class_id]
        np.maximum(patch, g, out=patch)
        regression[i, j] = regression_target(box, i, j, spec)
        mask[i, j] = True
    if skipped:
        logger.warning(f"[head] {skipped} ground-truth boxes outside the BEV extent were skipped")
    return HeadTargets(heatmap, regression, mask, skipped)


def focal_loss(logits: Tensor, heatmap: np.ndarray, alpha: float = FOCAL_ALPHA,
               beta: float = FOCAL_BETA) -> Tensor:
    """Penalty-reduced pixel focal loss, normalized by the number of peaks."""
    p = ops.sigmoid(logits)
    q = ops.sub(1.0, p)
    pos = (heatmap == 1.0).astype(np.float64)
    neg_weight = (1.0 - pos) * (1.0 - heatmap) ** beta
    pos_term = ops.mul(ops.mul(ops.power(q, alpha), ops.log(p)), pos)
    neg_term = ops.mul(ops.mul(ops.power(p, alpha), ops.log(q)), neg_weight)
    total = ops.sum(ops.add(pos_term, neg_term))
    return ops.scale(total, -1.0 / max(1.0, pos.sum()))


def regression_loss(regression: Tensor, targets: HeadTargets) -> Tensor:
    """Masked L1, averaged over regressed cells."""
    weight = targets.mask[..., None].astype(np.float64)
    diff = ops.abs(ops.sub(regression, targets.regression))
    return ops.scale(ops.sum(ops.mul(diff, weight)), 1.0 / max(1, int(targets.mask.sum())))
