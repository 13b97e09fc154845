"""
Radar-camera gating.

    F'_R   = MLP_0(F_R)
    gate_C = sigmoid(Conv_C(B_C + F'_R))
    gate_R = sigmoid(Conv_R(F'_R + B_C))
    B_RC   = gate_C * B_C + gate_R * F'_R

Gates are per channel (conv output width C).
"""

from dataclasses import dataclass

from src.bev.feature_map import BevFeatureMap
from src.tensor import ops
from src.tensor.mlp import ConvParams, MlpParams, conv_forward, mlp_forward
from src.tensor.params import ParamStore


@dataclass(frozen=True)
class GatingParams:
    mlp0: MlpParams
    conv_c: ConvParams
    conv_r: ConvParams

    @classmethod
    def build(cls, store: ParamStore, prefix: str, channels: int, mlp0_layers: int) -> "GatingParams":
        widths = [channels] * (mlp0_layers + 1)
        return cls(
            mlp0=store.mlp(f"{prefix}.mlp0", widths),
            conv_c=store.conv(f"{prefix}.conv_c", channels, channels),
            conv_r=store.conv(f"{prefix}.conv_r", channels, channels),
        )


def encode_radar(radar: BevFeatureMap, params: GatingParams) -> BevFeatureMap:
    """F'_R."""
    return BevFeatureMap(mlp_forward(params.mlp0, radar.values), radar.spec)


def gates(camera: BevFeatureMap, radar_encoded: BevFeatureMap, params: GatingParams):
    """(gate_C, gate_R) tensors, each H x W x C in (0, 1)."""
    mixed = ops.add(camera.values, radar_encoded.values)
    return (
        ops.sigmoid(conv_forward(params.conv_c, mixed)),
        ops.sigmoid(conv_forward(params.conv_r, mixed)),
    )


def radar_camera_gating(camera: BevFeatureMap, radar: BevFeatureMap, params: GatingParams) -> BevFeatureMap:
    """B_RC."""
    camera.same_grid(radar, "radar-camera gating")
    encoded = encode_radar(radar, params)
    gate_c, gate_r = gates(camera, encoded, params)
    fused = ops.add(ops.mul(gate_c, camera.values), ops.mul(gate_r, encoded.values))
    return BevFeatureMap(fused, camera.spec)


def ungated_sum(camera: BevFeatureMap, radar: BevFeatureMap, params: GatingParams) -> BevFeatureMap:
    """B_C + F'_R, used when gating is ablated."""
    camera.same_grid(radar, "ungated fusion")
    encoded = encode_radar(radar, params)
    return BevFeatureMap(ops.add(camera.values, encoded.values), camera.spec)
