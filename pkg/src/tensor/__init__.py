# Tensor kernels: fp64 arrays, gradient tape, primitive ops
from src.tensor.tensor import GradTape, Tensor, backward, current_tape
from src.tensor.mlp import ConvParams, MlpLayer, MlpParams, NormParams, mlp_forward
from src.tensor.params import ParamStore
