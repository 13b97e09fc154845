"""
Dense fp64 tensors and the reverse-mode gradient tape.

A Tensor is an immutable row-major array. When a GradTape is active on the
current thread and any input of a primitive op carries a grad_id, the op is
recorded on that tape. Recording order is a valid topological order, so
backward() replays the node list once, newest first.

Usage:
    with GradTape() as tape:
        x = tape.watch(np.zeros(3))
        loss = ops.sum(ops.sigmoid(x))
    grads = backward(tape, loss)      # {x.grad_id: Tensor([0.25, 0.25, 0.25])}
"""

import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import ContractError, NumericError, ShapeError

logger = logging.getLogger(__name__)

_local = threading.local()


class Tensor:
    """Immutable N-dimensional fp64 array with an optional tape handle."""

    __slots__ = ("data", "grad_id")

    def __init__(self, data, grad_id: Optional[int] = None):
        arr = np.array(data, dtype=np.float64)
        if arr.size and not np.isfinite(arr).all():
            raise NumericError(f"non-finite values in tensor of shape {arr.shape}")
        arr.setflags(write=False)
        self.data = arr
        self.grad_id = grad_id

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def tracked(self) -> bool:
        return self.grad_id is not None

    def numpy(self) -> np.ndarray:
        """Read-only view of the values."""
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        tag = f", grad_id={self.grad_id}" if self.grad_id is not None else ""
        return f"Tensor(shape={self.shape}{tag})"

    # Arithmetic sugar; the real work lives in src.tensor.ops.
    def __add__(self, other):
        from src.tensor import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from src.tensor import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from src.tensor import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from src.tensor import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from src.tensor import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from src.tensor import ops
        return ops.mul(other, self)

    def __matmul__(self, other):
        from src.tensor import ops
        return ops.matmul(self, other)

    def __neg__(self):
        from src.tensor import ops
        return ops.scale(self, -1.0)


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class TapeNode:
    """One recorded primitive: output handle, input handles, local backward."""
    op: str
    out_id: int
    input_ids: Tuple[Optional[int], ...]
    backward_fn: BackwardFn


class GradTape:
    """
    Ordered record of primitive ops for one thread.

    Leaves are created with watch(); every other handle is produced by
    record(). A tape is confined to the thread that entered it.
    """

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self.leaf_shapes: Dict[int, Tuple[int, ...]] = {}
        self.shapes: Dict[int, Tuple[int, ...]] = {}
        self._next_id = 0
        self._owner: Optional[int] = None

    def _new_id(self, shape: Tuple[int, ...]) -> int:
        handle = self._next_id
        self._next_id += 1
        self.shapes[handle] = shape
        return handle

    def watch(self, data) -> Tensor:
        """Create a tracked leaf tensor from values."""
        values = data.data if isinstance(data, Tensor) else data
        arr = np.array(values, dtype=np.float64)
        handle = self._new_id(arr.shape)
        self.leaf_shapes[handle] = arr.shape
        return Tensor(arr, grad_id=handle)

    def record(
        self,
        op: str,
        inputs: Sequence,
        out_data: np.ndarray,
        backward_fn: BackwardFn,
    ) -> Tensor:
        """Register the output of a primitive and return it as a tracked Tensor."""
        out = Tensor(out_data)
        input_ids = tuple(
            t.grad_id if isinstance(t, Tensor) else None for t in inputs
        )
        handle = self._new_id(out.shape)
        self.nodes.append(TapeNode(op, handle, input_ids, backward_fn))
        out.grad_id = handle
        return out

    def __len__(self):
        return len(self.nodes)

    def __enter__(self) -> "GradTape":
        stack = _tape_stack()
        if self._owner is not None and self._owner != threading.get_ident():
            raise ContractError("a GradTape cannot be shared across threads")
        self._owner = threading.get_ident()
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False


def _tape_stack() -> List[GradTape]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def current_tape() -> Optional[GradTape]:
    """The innermost tape entered on this thread, if any."""
    stack = _tape_stack()
    return stack[-1] if stack else None


def backward(tape: GradTape, loss: Tensor) -> Dict[int, Tensor]:
    """
    Reverse-mode sweep over the tape.

    Args:
        tape: Tape the loss was produced under
        loss: Scalar tensor recorded on the tape

    Returns:
        Map of leaf handle -> gradient Tensor; leaves the loss does not
        depend on get zeros.
    """
    if loss.size != 1:
        raise ContractError(f"loss must be a scalar, got shape {loss.shape}")

    grads: Dict[int, np.ndarray] = {}
    if loss.grad_id is not None:
        grads[loss.grad_id] = np.ones(loss.shape, dtype=np.float64)

    for node in reversed(tape.nodes):
        # every consumer of out_id was recorded later, so its gradient is complete
        g_out = grads.pop(node.out_id, None)
        if g_out is None:
            continue
        input_grads = node.backward_fn(g_out)
        for handle, g in zip(node.input_ids, input_grads):
            if handle is None or g is None:
                continue
            g = np.asarray(g, dtype=np.float64)
            if g.shape != tape.shapes[handle]:
                g = g.reshape(tape.shapes[handle])
            if handle in grads:
                grads[handle] = grads[handle] + g
            else:
                grads[handle] = g

    result = {}
    for handle, shape in tape.leaf_shapes.items():
        g = grads.get(handle)
        result[handle] = Tensor(g if g is not None else np.zeros(shape))
    return result
