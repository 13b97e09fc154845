from dataclasses import dataclass

import numpy as np

from src.errors import ShapeError
from src.geometry.frames import BevGridSpec
from src.tensor.tensor import Tensor


@dataclass(frozen=True)
class BevFeatureMap:
    """H x W x C values on a BEV grid."""
    values: Tensor
    spec: BevGridSpec

    def __post_init__(self):
        if self.values.shape != self.spec.shape:
            raise ShapeError(f"BEV map {self.values.shape} does not match grid {self.spec.shape}")

    def same_grid(self, other: "BevFeatureMap", what: str) -> None:
        if other.spec != self.spec:
            raise ShapeError(f"{what}: BEV maps live on different grids")


def reference_uv(spec: BevGridSpec) -> np.ndarray:
    """(col, row) sampling coordinate of every cell, row-major, H*W x 2."""
    rows, cols = np.meshgrid(np.arange(spec.rows), np.arange(spec.cols), indexing="ij")
    return np.column_stack([cols.reshape(-1), rows.reshape(-1)]).astype(np.float64)
