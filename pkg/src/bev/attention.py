"""
Radar-guided BEV query: single-head deformable self-attention whose value
set is {Q, F_R}.

For every BEV cell p the query predicts S sampling offsets per value map and
one attention logit per sample. Logits are softmaxed jointly over all
samples of all value maps, each value map is linearly projected, and

    out_p = sum_V sum_s w[V, s] * bilinear(proj_V(V), p + offset[V, s])

is residual-added to Q and layer-normed. Offsets carry no gradient.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

from src.bev.feature_map import BevFeatureMap, reference_uv
from src.errors import ShapeError
from src.tensor import ops
from src.tensor.mlp import MlpParams, NormParams, mlp_forward, mlp_values, norm_forward
from src.tensor.params import ParamStore
from src.tensor.tensor import Tensor

from config.settings import NORM_EPS


@dataclass(frozen=True)
class DeformableParams:
    offset_mlp: MlpParams          # C -> n_values * S * 2, zero-initialized
    weight_mlp: MlpParams          # C -> n_values * S
    value_proj: Tuple[Tensor, ...]  # one C x C projection per value map
    norm: NormParams
    samples: int

    @property
    def n_values(self) -> int:
        return len(self.value_proj)

    @classmethod
    def build(cls, store: ParamStore, prefix: str, channels: int, samples: int,
              n_values: int) -> "DeformableParams":
        if samples < 1:
            raise ShapeError(f"deformable attention needs S >= 1, got {samples}")
        return cls(
            offset_mlp=store.mlp(f"{prefix}.offset", [channels, n_values * samples * 2], last_init="zeros"),
            weight_mlp=store.mlp(f"{prefix}.weight", [channels, n_values * samples]),
            value_proj=tuple(
                store.param(f"{prefix}.value{v}", (channels, channels), "identity") for v in range(n_values)
            ),
            norm=store.norm(f"{prefix}.norm", channels),
            samples=samples,
        )


def deformable_attention(query: BevFeatureMap, values: Sequence[BevFeatureMap],
                         params: DeformableParams) -> Tensor:
    """Attended H*W x C values before the residual."""
    if len(values) != params.n_values:
        raise ShapeError(f"attention built for {params.n_values} value maps, got {len(values)}")
    for v in values:
        query.same_grid(v, "deformable attention")
    H, W, C = query.spec.shape
    S = params.samples
    q_flat = ops.reshape(query.values, (H * W, C))
    ref = reference_uv(query.spec)
    offsets = mlp_values(params.offset_mlp, q_flat.data).reshape(H * W, len(values), S, 2)
    weights = ops.softmax(mlp_forward(params.weight_mlp, q_flat), axis=-1)

    out = None
    for v_idx, value in enumerate(values):
        projected = ops.reshape(
            ops.matmul(ops.reshape(value.values, (H * W, C)), params.value_proj[v_idx]), (H, W, C)
        )
        for s in range(S):
            sampled, _ = ops.bilinear_sample(projected, ref + offsets[:, v_idx, s])
            term = ops.mul(sampled, ops.take(weights, [v_idx * S + s], axis=1))
            out = term if out is None else ops.add(out, term)
    return out


def radar_guided_query(query: BevFeatureMap, radar: BevFeatureMap, params: DeformableParams) -> BevFeatureMap:
    """Q^RG = norm(Q + attn(Q; {Q, F_R}))."""
    query.same_grid(radar, "radar-guided query")
    return _residual(query, deformable_attention(query, [query, radar], params), params)


def query_self_attention(query: BevFeatureMap, params: DeformableParams) -> BevFeatureMap:
    """Plain deformable self-attention over {Q}; used when radar guidance is off."""
    return _residual(query, deformable_attention(query, [query], params), params)


def _residual(query: BevFeatureMap, attended: Tensor, params: DeformableParams) -> BevFeatureMap:
    H, W, C = query.spec.shape
    summed = ops.add(query.values, ops.reshape(attended, (H, W, C)))
    return BevFeatureMap(norm_forward(params.norm, summed, NORM_EPS), query.spec)
