"""
Grid point feature pooling: set abstraction over the attended returns and
bilinear pooling of level-0 camera features.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.bev.cross_attention import clamp_to_map
from src.camera.features import CameraFeatures
from src.errors import ShapeError
from src.tensor import ops
from src.tensor.mlp import MlpParams, mlp_forward
from src.tensor.params import ParamStore
from src.tensor.tensor import Tensor

from config.settings import SETABS_RADII


@dataclass(frozen=True)
class SetAbsParams:
    mlps: Tuple[MlpParams, ...]   # per radius: width + 3 -> hidden -> out / len(radii), relu
    radii: Tuple[float, ...]

    @property
    def out_width(self) -> int:
        return sum(m.out_width for m in self.mlps)

    @classmethod
    def build(cls, store: ParamStore, prefix: str, in_width: int, out_width: int, hidden: int,
              radii: Sequence[float] = SETABS_RADII) -> "SetAbsParams":
        if not radii or out_width % len(radii):
            raise ShapeError(f"set abstraction width {out_width} does not split over {len(radii)} radii")
        part = out_width // len(radii)
        mlps = tuple(
            store.mlp(f"{prefix}.r{i}", [in_width + 3, hidden, part], final_activation="relu")
            for i in range(len(radii))
        )
        return cls(mlps, tuple(float(r) for r in radii))


def set_abstraction(features: Tensor, positions: np.ndarray, grid: np.ndarray,
                    params: SetAbsParams) -> Tensor:
    """
    Pool attended return features around each grid point.

    For each radius, the returns within that BEV distance of g_m are encoded
    as MLP([a_k ; u_k - g_m]) and max-pooled; an empty ball gives zeros.

    Args:
        features: K x width attended features
        positions: K x 3 return positions
        grid: M x 3 grid points

    Returns:
        M x out_width
    """
    K, M = len(positions), len(grid)
    u = np.asarray(positions, dtype=np.float64).reshape(K, 3)
    g = np.asarray(grid, dtype=np.float64).reshape(M, 3)
    rel = u[None, :, :] - g[:, None, :]                          # M x K x 3
    bev_dist = np.hypot(rel[..., 0], rel[..., 1])
    pairs = ops.concat([
        ops.take(features, np.tile(np.arange(K), M), axis=0),
        Tensor(rel.reshape(M * K, 3)),
    ], axis=1)
    parts = []
    for mlp, radius in zip(params.mlps, params.radii):
        encoded = ops.reshape(mlp_forward(mlp, pairs), (M, K, mlp.out_width))
        inside = (bev_dist <= radius).astype(np.float64)[..., None]
        parts.append(ops.max_reduce(ops.mul(encoded, inside), axis=1))
    return ops.concat(parts, axis=1)


def pool_image_features(grid: np.ndarray, features: Sequence[CameraFeatures], channels: Optional[int] = None) -> Tensor:
    """
    Level-0 camera features at each grid point, averaged over the cameras
    that see it; zeros where none does.

    Returns:
        M x C
    """
    g = np.asarray(grid, dtype=np.float64).reshape(-1, 3)
    M = len(g)
    C = channels if channels is not None else features[0].channels
    total = None
    counts = np.zeros(M)
    zero_row = Tensor(np.zeros((1, C)))
    for feat in features:
        uv, _, valid = feat.camera.project_points(g, level=0)
        rows = np.nonzero(valid)[0]
        if len(rows) == 0:
            continue
        fmap = feat.level(0)
        h, w, _ = fmap.shape
        sampled, _ = ops.bilinear_sample(fmap, clamp_to_map(uv[rows], h, w))
        slot = np.zeros(M, dtype=np.int64)
        slot[rows] = np.arange(1, len(rows) + 1)
        placed = ops.take(ops.concat([zero_row, sampled], axis=0), slot, axis=0)
        total = placed if total is None else ops.add(total, placed)
        counts[rows] += 1
    if total is None:
        return Tensor(np.zeros((M, C)))
    return ops.mul(total, (1.0 / np.maximum(counts, 1))[:, None])
