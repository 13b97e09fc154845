"""
Proposal-aware attention over a proposal's associated radar returns.

    s_k = MLP_2([MLP_1(r_k) ; pe(c - u_k)])
    a_k = softmax_k(s_k) * MLP_3(r_k)

r_k is the raw return (x, y, z, rcs, vx, vy, sweep_age), c the proposal
center, u_k the return position. pe is a sinusoidal encoding of the 3D
offset with frequencies 2^f / scale.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.errors import ContractError
from src.radar.points import RAW_FEATURES
from src.tensor import ops
from src.tensor.mlp import MlpParams, mlp_forward
from src.tensor.params import ParamStore
from src.tensor.tensor import Tensor

from config.settings import POS_ENC_FREQS, POS_ENC_SCALE


def encoding_width(freqs: int = POS_ENC_FREQS) -> int:
    return 3 * 2 * freqs


def positional_encoding(offsets: np.ndarray, freqs: int = POS_ENC_FREQS,
                        scale: float = POS_ENC_SCALE) -> np.ndarray:
    """K x 3 offsets -> K x 6F features: sin then cos, frequency-major per axis."""
    d = np.asarray(offsets, dtype=np.float64).reshape(-1, 3)
    omega = 2.0 ** np.arange(freqs) / scale
    phase = d[:, :, None] * omega[None, None, :]          # K x 3 x F
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=2).reshape(len(d), -1)


@dataclass(frozen=True)
class PointAttentionParams:
    mlp1: MlpParams   # 7 -> hidden -> width
    mlp2: MlpParams   # width + 6F -> hidden -> 1
    mlp3: MlpParams   # 7 -> hidden -> width
    freqs: int

    @property
    def width(self) -> int:
        return self.mlp3.out_width

    @classmethod
    def build(cls, store: ParamStore, prefix: str, width: int, hidden: int,
              freqs: int = POS_ENC_FREQS) -> "PointAttentionParams":
        return cls(
            mlp1=store.mlp(f"{prefix}.mlp1", [RAW_FEATURES, hidden, width]),
            mlp2=store.mlp(f"{prefix}.mlp2", [width + encoding_width(freqs), hidden, 1]),
            mlp3=store.mlp(f"{prefix}.mlp3", [RAW_FEATURES, hidden, width]),
            freqs=freqs,
        )


def importance_weights(center: Sequence[float], raw: np.ndarray, params: PointAttentionParams) -> Tensor:
    """softmax over the K returns of MLP_2([MLP_1(r_k) ; pe(c - u_k)])."""
    raw = np.asarray(raw, dtype=np.float64)
    offsets = np.asarray(center, dtype=np.float64)[:3] - raw[:, 0:3]
    pe = Tensor(positional_encoding(offsets, params.freqs))
    scores = mlp_forward(params.mlp2, ops.concat([mlp_forward(params.mlp1, raw), pe], axis=1))
    return ops.softmax(ops.reshape(scores, (len(raw),)), axis=0)


def proposal_radar_attention(center: Sequence[float], raw: np.ndarray, params: PointAttentionParams,
                             attend: bool = True) -> Tensor:
    """
    Attended return features.

    Args:
        center: Proposal center
        raw: K x 7 associated returns, K >= 1
        params: Attention parameters
        attend: False gives every return the uniform weight 1/K

    Returns:
        K x width tensor
    """
    raw = np.asarray(raw, dtype=np.float64)
    K = len(raw)
    if K == 0:
        raise ContractError("proposal attention needs at least one associated return")
    values = mlp_forward(params.mlp3, raw)
    if not attend:
        return ops.scale(values, 1.0 / K)
    weights = importance_weights(center, raw, params)
    return ops.mul(values, ops.reshape(weights, (K, 1)))
