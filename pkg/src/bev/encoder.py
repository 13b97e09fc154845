"""
The L-layer BEV encoder.

Per layer:
    q_rg = RGBQ(Q, F_R)                 (self-attention over {Q} when radar guidance is off)
    b_c  = SCA(q_rg, camera features)
    b_rc = RCG(b_c, F_R)                (b_c + F'_R when gating is off, b_c when radar is off)
    x    = norm(q_rg + b_rc)
    x    = norm(x + FFN(x))
The layer output is the next layer's query.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

from src.bev.attention import DeformableParams, query_self_attention, radar_guided_query
from src.bev.cross_attention import CrossAttentionParams, SamplingPlan, plan_sampling, spatial_cross_attention
from src.bev.feature_map import BevFeatureMap
from src.bev.gating import GatingParams, radar_camera_gating, ungated_sum
from src.camera.features import CameraFeatures
from src.errors import ContractError, ShapeError
from src.geometry.frames import BevGridSpec
from src.tensor import ops
from src.tensor.mlp import MlpParams, NormParams, mlp_forward, norm_forward
from src.tensor.params import ParamStore
from src.tensor.tensor import Tensor

from config.settings import NORM_EPS

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderLayerParams:
    attention: DeformableParams
    cross: CrossAttentionParams
    gating: Optional[GatingParams]
    norm_fuse: NormParams
    ffn: MlpParams
    norm_ffn: NormParams


@dataclass(frozen=True)
class EncoderParams:
    query: Tensor
    layers: Tuple[EncoderLayerParams, ...]
    radar_guided: bool
    gated: bool
    uses_radar: bool

    @classmethod
    def build(
        cls,
        store: ParamStore,
        spec: BevGridSpec,
        n_layers: int,
        samples: int,
        levels: int,
        heights: Sequence[float],
        mlp0_layers: int = 1,
        ffn_expansion: int = 2,
        radar_guided: bool = True,
        gated: bool = True,
        prefix: str = "encoder",
    ) -> "EncoderParams":
        """
        Args:
            radar_guided: Query attention reads {Q, F_R} instead of {Q}
            gated: Fuse through the gating block instead of a plain sum;
                with both flags off the radar branch is dropped entirely
        """
        if n_layers < 1:
            raise ContractError(f"encoder needs L >= 1, got {n_layers}")
        C = spec.channels
        uses_radar = radar_guided or gated
        query = store.param(f"{prefix}.query", spec.shape, "normal", std=1.0)
        layers = []
        for i in range(n_layers):
            p = f"{prefix}.{i}"
            layers.append(EncoderLayerParams(
                attention=DeformableParams.build(store, f"{p}.rgbq", C, samples, 2 if radar_guided else 1),
                cross=CrossAttentionParams.build(store, f"{p}.sca", C, levels, samples, heights),
                gating=GatingParams.build(store, f"{p}.rcg", C, mlp0_layers) if uses_radar else None,
                norm_fuse=store.norm(f"{p}.norm_fuse", C),
                ffn=store.mlp(f"{p}.ffn", [C, ffn_expansion * C, C]),
                norm_ffn=store.norm(f"{p}.norm_ffn", C),
            ))
        return cls(query, tuple(layers), radar_guided, gated, uses_radar)


def encode_layer(query: BevFeatureMap, radar: Optional[BevFeatureMap], features: Sequence[CameraFeatures],
                 layer: EncoderLayerParams, params: EncoderParams, plan: SamplingPlan) -> BevFeatureMap:
    if params.radar_guided:
        q_rg = radar_guided_query(query, radar, layer.attention)
    else:
        q_rg = query_self_attention(query, layer.attention)

    b_c = spatial_cross_attention(q_rg, features, layer.cross, plan)

    if not params.uses_radar:
        b_rc = b_c
    elif params.gated:
        b_rc = radar_camera_gating(b_c, radar, layer.gating)
    else:
        b_rc = ungated_sum(b_c, radar, layer.gating)

    x = norm_forward(layer.norm_fuse, ops.add(q_rg.values, b_rc.values), NORM_EPS)
    x = norm_forward(layer.norm_ffn, ops.add(x, mlp_forward(layer.ffn, x)), NORM_EPS)
    return BevFeatureMap(x, query.spec)


def encode(radar: Optional[BevFeatureMap], features: Sequence[CameraFeatures], params: EncoderParams,
           spec: BevGridSpec, n_layers: Optional[int] = None,
           plan: Optional[SamplingPlan] = None) -> BevFeatureMap:
    """
    Run the encoder stack.

    Args:
        radar: F_R, or None when the radar branch is off
        features: Camera feature pyramids (each carries its camera model)
        params: Encoder parameters
        spec: BEV grid
        n_layers: L; defaults to every built layer
        plan: Precomputed camera sampling plan for this rig and grid

    Returns:
        Fused BEV feature map
    """
    n_layers = len(params.layers) if n_layers is None else n_layers
    if n_layers < 1 or n_layers > len(params.layers):
        raise ContractError(f"L must be in [1, {len(params.layers)}], got {n_layers}")
    if params.uses_radar:
        if radar is None:
            raise ContractError("encoder was built with a radar branch but no F_R was given")
        if radar.spec != spec:
            raise ShapeError("F_R is on a different grid than the encoder")
    if plan is None:
        plan = plan_sampling(spec, features, params.layers[0].cross.heights)

    x = BevFeatureMap(params.query, spec)
    for i in range(n_layers):
        x = encode_layer(x, radar, features, params.layers[i], params, plan)
        logger.debug(f"[encoder] layer {i + 1}/{n_layers} done")
    return x
