"""
Pillar encoding of radar points into the BEV feature map F_R.

Each point becomes a 9-wide feature (x, y, z, rcs, vx, vy, sweep_age,
dx_cell, dy_cell), passes through a per-point MLP, is max-pooled into its
cell, and the resulting map goes through a small stack of 3 x 3 convs.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from src.errors import ContractError, ShapeError
from src.geometry.frames import BevGridSpec, bev_cells
from src.radar.points import RadarPoint, points_to_array
from src.tensor import ops
from src.tensor.mlp import ConvParams, MlpParams, conv_forward, mlp_forward
from src.tensor.params import ParamStore
from src.tensor.tensor import Tensor

from config.settings import RADAR_POINT_FEATURES


@dataclass(frozen=True)
class RadarEncoderParams:
    point_mlp: MlpParams
    convs: Tuple[ConvParams, ...]

    @classmethod
    def build(cls, store: ParamStore, channels: int, hidden: int,
              mlp_layers: int, conv_layers: int, prefix: str = "radar") -> "RadarEncoderParams":
        widths = [RADAR_POINT_FEATURES] + [hidden] * (mlp_layers - 1) + [channels]
        mlp = store.mlp(f"{prefix}.point_mlp", widths, final_activation="relu")
        convs = tuple(store.conv(f"{prefix}.conv{i}", channels, channels) for i in range(conv_layers))
        return cls(mlp, convs)


def point_features(points: Sequence[RadarPoint], spec: BevGridSpec):
    """
    Returns:
        (features N x 9, flat cell index N), rows sorted into a canonical order
        so downstream results do not depend on input order.
    """
    raw = points_to_array(points)
    if len(raw) == 0:
        return np.zeros((0, RADAR_POINT_FEATURES)), np.zeros(0, dtype=np.int64)
    rows, cols, inside = bev_cells(raw[:, :2], spec)
    if not inside.all():
        raise ContractError(f"{int((~inside).sum())} radar points lie outside the BEV extent")
    cx = spec.x_range[0] + (rows + 0.5) * spec.resolution
    cy = spec.y_range[0] + (cols + 0.5) * spec.resolution
    feats = np.column_stack([raw, raw[:, 0] - cx, raw[:, 1] - cy])
    flat = rows * spec.cols + cols
    order = np.lexsort(tuple(feats[:, j] for j in reversed(range(feats.shape[1]))))
    return feats[order], flat[order]


def pillarize(points: Sequence[RadarPoint], spec: BevGridSpec, params: RadarEncoderParams) -> Tensor:
    """H x W x C radar BEV features."""
    if params.point_mlp.in_width != RADAR_POINT_FEATURES:
        raise ShapeError(
            f"point MLP takes {params.point_mlp.in_width} inputs, point features are {RADAR_POINT_FEATURES} wide"
        )
    H, W = spec.rows, spec.cols
    feats, flat = point_features(points, spec)
    width = params.point_mlp.out_width
    if len(feats):
        embedded = mlp_forward(params.point_mlp, feats)
    else:
        embedded = Tensor(np.zeros((0, width)))
    pooled = ops.scatter_max(embedded, flat, H * W)
    bev = ops.reshape(pooled, (H, W, width))
    for conv in params.convs:
        bev = ops.relu(conv_forward(conv, bev))
    return bev
