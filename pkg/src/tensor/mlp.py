"""
Channel-wise MLPs and the small parameter records built on top of the ops.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from src.errors import ShapeError
from src.tensor import ops
from src.tensor.tensor import Tensor

ACTIVATIONS = ("relu", "none")


@dataclass(frozen=True)
class MlpLayer:
    """weight is in x out, bias is out."""
    weight: Tensor
    bias: Tensor
    activation: str = "none"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation '{self.activation}'")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ShapeError(
                f"layer weight {self.weight.shape} and bias {self.bias.shape} do not fit"
            )


@dataclass(frozen=True)
class MlpParams:
    layers: Tuple[MlpLayer, ...]

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("an MLP needs at least one layer")
        for i, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ShapeError(
                    f"layer {i} outputs {a.weight.shape[1]} but layer {i + 1} expects {b.weight.shape[0]}"
                )

    @property
    def in_width(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def out_width(self) -> int:
        return self.layers[-1].weight.shape[1]

    @classmethod
    def from_arrays(cls, spec: Sequence[tuple]) -> "MlpParams":
        """Build from (weight, bias, activation) triples of plain arrays."""
        return cls(tuple(MlpLayer(Tensor(w), Tensor(b), act) for w, b, act in spec))


@dataclass(frozen=True)
class ConvParams:
    """3 x 3 convolution: weight 3 x 3 x Cin x Cout, bias Cout."""
    weight: Tensor
    bias: Tensor


@dataclass(frozen=True)
class NormParams:
    gamma: Tensor
    beta: Tensor


def mlp_forward(params: MlpParams, x) -> Tensor:
    """Apply each (xW + b, activation) over the trailing axis of x."""
    x = ops.as_tensor(x)
    if x.ndim == 0 or x.shape[-1] != params.in_width:
        raise ShapeError(
            f"MLP expects trailing width {params.in_width}, got input {x.shape}"
        )
    lead = x.shape[:-1]
    h = ops.reshape(x, (-1, params.in_width))
    for layer in params.layers:
        h = ops.add(ops.matmul(h, layer.weight), layer.bias)
        if layer.activation == "relu":
            h = ops.relu(h)
    return ops.reshape(h, lead + (params.out_width,))


def mlp_values(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Untracked evaluation on plain arrays, for quantities that carry no gradient."""
    h = np.asarray(x, dtype=np.float64)
    for layer in params.layers:
        h = h @ layer.weight.data + layer.bias.data
        if layer.activation == "relu":
            h = np.maximum(h, 0.0)
    return h


def conv_forward(params: ConvParams, x) -> Tensor:
    return ops.conv3x3(x, params.weight, params.bias)


def norm_forward(params: NormParams, x, eps: float) -> Tensor:
    return ops.layer_norm(x, params.gamma, params.beta, eps)
