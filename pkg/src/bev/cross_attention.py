"""
Spatial cross attention from BEV queries to camera feature pyramids.

Each BEV cell is lifted to N_z reference heights. Every (camera, height)
pair whose projection is valid samples all pyramid levels at S learned
offsets around the projected point; samples are weighted by a softmax over
levels x S predicted from the query. The attended value of a cell is the mean
over its valid (camera, height) hits. Cells no camera sees keep the query.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.bev.feature_map import BevFeatureMap
from src.camera.features import CameraFeatures
from src.errors import ShapeError
from src.geometry.frames import BevGridSpec
from src.tensor import ops
from src.tensor.mlp import MlpParams, mlp_forward, mlp_values
from src.tensor.params import ParamStore
from src.tensor.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CrossAttentionParams:
    offset_mlp: MlpParams   # C -> levels * S * 2, zero-initialized
    weight_mlp: MlpParams   # C -> levels * S
    value_proj: Tensor      # C x C, identity-initialized
    levels: int
    samples: int
    heights: Tuple[float, ...]

    @classmethod
    def build(cls, store: ParamStore, prefix: str, channels: int, levels: int,
              samples: int, heights: Sequence[float]) -> "CrossAttentionParams":
        if samples < 1 or levels < 1 or not heights:
            raise ShapeError("cross attention needs S >= 1, at least one level and one height")
        return cls(
            offset_mlp=store.mlp(f"{prefix}.offset", [channels, levels * samples * 2], last_init="zeros"),
            weight_mlp=store.mlp(f"{prefix}.weight", [channels, levels * samples]),
            value_proj=store.param(f"{prefix}.value", (channels, channels), "identity"),
            levels=levels,
            samples=samples,
            heights=tuple(float(z) for z in heights),
        )


@dataclass(frozen=True)
class CameraHits:
    """Valid projections of one (camera, height) pair."""
    camera: int
    cells: np.ndarray   # flat BEV indices with a valid hit
    uv: np.ndarray      # image-pixel coordinates of those hits


@dataclass(frozen=True)
class SamplingPlan:
    hits: Tuple[CameraHits, ...]
    counts: np.ndarray  # valid hits per BEV cell

    @property
    def covered(self) -> np.ndarray:
        return self.counts > 0


def plan_sampling(spec: BevGridSpec, features: Sequence[CameraFeatures],
                  heights: Sequence[float]) -> SamplingPlan:
    """Project every cell's reference pillar into every camera once."""
    centers = spec.cell_centers().reshape(-1, 2)
    counts = np.zeros(len(centers), dtype=np.int64)
    hits: List[CameraHits] = []
    for c, feat in enumerate(features):
        for z in heights:
            refs = np.column_stack([centers, np.full(len(centers), z)])
            uv, _, valid = feat.camera.project_points(refs)
            cells = np.nonzero(valid)[0]
            if len(cells) == 0:
                continue
            counts[cells] += 1
            hits.append(CameraHits(c, cells, uv[cells]))
    logger.debug(f"[sca] {int((counts > 0).sum())}/{len(counts)} cells seen by a camera")
    return SamplingPlan(tuple(hits), counts)


def clamp_to_map(uv: np.ndarray, height: int, width: int) -> np.ndarray:
    """Border mode: keep valid hits inside the sampled map."""
    return np.column_stack([np.clip(uv[:, 0], 0.0, width - 1), np.clip(uv[:, 1], 0.0, height - 1)])


def spatial_cross_attention(query: BevFeatureMap, features: Sequence[CameraFeatures],
                            params: CrossAttentionParams, plan: SamplingPlan = None) -> BevFeatureMap:
    """B_C: attended camera value at covered cells, the query elsewhere."""
    H, W, C = query.spec.shape
    if plan is None:
        plan = plan_sampling(query.spec, features, params.heights)
    L, S = params.levels, params.samples
    for feat in features:
        if len(feat.levels) < L:
            raise ShapeError(f"camera '{feat.camera.name}' has {len(feat.levels)} levels, attention needs {L}")
        if feat.channels != C:
            raise ShapeError(f"camera '{feat.camera.name}' has {feat.channels} channels, BEV has {C}")

    q_flat = ops.reshape(query.values, (H * W, C))
    if not plan.hits:
        return query

    offsets = mlp_values(params.offset_mlp, q_flat.data).reshape(H * W, L, S, 2)
    weights = ops.softmax(mlp_forward(params.weight_mlp, q_flat), axis=-1)

    projected = {}
    accumulated = None
    zero_row = Tensor(np.zeros((1, C)))
    for hit in plan.hits:
        feat = features[hit.camera]
        if hit.camera not in projected:
            projected[hit.camera] = [
                ops.reshape(ops.matmul(ops.reshape(f, (-1, C)), params.value_proj), f.shape)
                for f in feat.levels[:L]
            ]
        w_hit = ops.take(weights, hit.cells, axis=0)
        contrib = None
        for l in range(L):
            fmap = projected[hit.camera][l]
            h, w, _ = fmap.shape
            base = hit.uv * feat.camera.feature_scale[l]
            for s in range(S):
                uv = clamp_to_map(base + offsets[hit.cells, l, s], h, w)
                sampled, _ = ops.bilinear_sample(fmap, uv)
                term = ops.mul(sampled, ops.take(w_hit, [l * S + s], axis=1))
                contrib = term if contrib is None else ops.add(contrib, term)
        # place the hit rows back on the full grid; row 0 of the stack is the empty row
        slot = np.zeros(H * W, dtype=np.int64)
        slot[hit.cells] = np.arange(1, len(hit.cells) + 1)
        placed = ops.take(ops.concat([zero_row, contrib], axis=0), slot, axis=0)
        accumulated = placed if accumulated is None else ops.add(accumulated, placed)

    covered = plan.covered[:, None].astype(np.float64)
    inv_count = (1.0 / np.maximum(plan.counts, 1))[:, None]
    attended = ops.mul(accumulated, inv_count)
    mixed = ops.add(ops.mul(attended, covered), ops.mul(q_flat, 1.0 - covered))
    return BevFeatureMap(ops.reshape(mixed, (H, W, C)), query.spec)
