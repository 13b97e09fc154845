"""
Named parameter storage.

Every learned value lives in a ParamStore under a dotted name
("encoder.0.gate_c.weight"). Builders ask the store for a name and shape; the
first request creates the entry with the seeded initializer, later requests
validate the shape. A store loaded from a checkpoint is frozen: asking for a
name it does not hold is a manifest error.
"""

import logging
from typing import Dict, Iterator, Optional, Sequence, Tuple

import numpy as np

from src.errors import ManifestError, ShapeError
from src.tensor.mlp import ConvParams, MlpLayer, MlpParams, NormParams
from src.tensor.tensor import GradTape, Tensor

logger = logging.getLogger(__name__)

INITIALIZERS = ("zeros", "ones", "identity", "normal")


class ParamStore:
    """Ordered name -> Tensor map with a deterministic initializer."""

    def __init__(self, seed: int = 0, frozen: bool = False):
        self._values: Dict[str, Tensor] = {}
        self._rng = np.random.default_rng(seed)
        self.frozen = frozen

    # ==================
    # Creation
    # ==================

    def _initial(self, shape: Tuple[int, ...], init: str, std: Optional[float]) -> np.ndarray:
        if init == "zeros":
            return np.zeros(shape)
        if init == "ones":
            return np.ones(shape)
        if init == "identity":
            if len(shape) == 2:
                return np.eye(shape[0], shape[1])
            if len(shape) == 4 and shape[:2] == (3, 3):
                w = np.zeros(shape)
                w[1, 1] = np.eye(shape[2], shape[3])
                return w
            raise ShapeError(f"no identity initializer for shape {shape}")
        if init == "normal":
            fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else 1
            scale = std if std is not None else 1.0 / np.sqrt(max(fan_in, 1))
            return self._rng.normal(0.0, scale, size=shape)
        raise ShapeError(f"unknown initializer '{init}'")

    def param(self, name: str, shape: Sequence[int], init: str = "normal",
              std: Optional[float] = None) -> Tensor:
        shape = tuple(int(s) for s in shape)
        existing = self._values.get(name)
        if existing is not None:
            if existing.shape != shape:
                raise ManifestError(
                    f"parameter '{name}' has shape {existing.shape}, configuration needs {shape}"
                )
            return existing
        if self.frozen:
            raise ManifestError(f"parameter '{name}' {shape} is missing from the checkpoint")
        value = Tensor(self._initial(shape, init, std))
        self._values[name] = value
        return value

    def mlp(self, prefix: str, widths: Sequence[int], final_activation: str = "none",
            last_init: str = "normal") -> MlpParams:
        """Layers widths[0] -> ... -> widths[-1]; relu between layers."""
        if len(widths) < 2:
            raise ShapeError(f"MLP '{prefix}' needs at least two widths, got {list(widths)}")
        n = len(widths) - 1
        layers = []
        for i, (a, b) in enumerate(zip(widths, widths[1:])):
            last = i == n - 1
            weight = self.param(f"{prefix}.{i}.weight", (a, b), last_init if last else "normal")
            bias = self.param(f"{prefix}.{i}.bias", (b,), "zeros")
            layers.append(MlpLayer(weight, bias, final_activation if last else "relu"))
        return MlpParams(tuple(layers))

    def conv(self, prefix: str, cin: int, cout: int, init: str = "normal") -> ConvParams:
        return ConvParams(
            self.param(f"{prefix}.weight", (3, 3, cin, cout), init),
            self.param(f"{prefix}.bias", (cout,), "zeros"),
        )

    def norm(self, prefix: str, width: int) -> NormParams:
        return NormParams(
            self.param(f"{prefix}.gamma", (width,), "ones"),
            self.param(f"{prefix}.beta", (width,), "zeros"),
        )

    # ==================
    # Access
    # ==================

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __len__(self) -> int:
        return len(self._values)

    def __getitem__(self, name: str) -> Tensor:
        return self._values[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def names(self):
        return list(self._values)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self._values.items()}

    def total_size(self) -> int:
        return sum(t.size for t in self._values.values())

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> "ParamStore":
        """Frozen store holding exactly the given values."""
        store = cls(frozen=True)
        for name, values in arrays.items():
            store._values[name] = Tensor(values)
        return store

    @classmethod
    def from_tensors(cls, tensors: Dict[str, Tensor]) -> "ParamStore":
        """Frozen store over existing tensors, tracked ones included."""
        store = cls(frozen=True)
        store._values.update(tensors)
        return store

    # ==================
    # Gradients
    # ==================

    def track(self, tape: GradTape) -> "ParamStore":
        """Frozen copy whose entries are leaves on tape."""
        tracked = ParamStore(frozen=True)
        for name, value in self._values.items():
            tracked._values[name] = tape.watch(value)
        return tracked

    def grads_by_name(self, grads: Dict[int, Tensor]) -> Dict[str, np.ndarray]:
        """Translate a backward() result for a tracked store into names."""
        out = {}
        for name, value in self._values.items():
            g = grads.get(value.grad_id)
            out[name] = g.data if g is not None else np.zeros(value.shape)
        return out

    def stepped(self, grads: Dict[str, np.ndarray], lr: float) -> "ParamStore":
        """Frozen store after one gradient-descent step."""
        moved = {
            name: value.data - lr * grads.get(name, 0.0)
            for name, value in self._values.items()
        }
        return ParamStore.from_arrays(moved)
