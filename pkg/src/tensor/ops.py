"""
Differentiable primitives.

Every learned-feature computation in the pipeline is a composition of the
functions in this module. Each primitive computes its result with numpy and,
when a tape is active and an input is tracked, records a closure that maps
the output gradient to input gradients.

Primitive set: add, sub, mul, scale, matmul, relu, sigmoid, log, power, abs,
softmax, max_reduce, sum, reshape, concat, take, bilinear_sample, conv3x3,
layer_norm, scatter_max.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import NumericError, ShapeError
from src.tensor.tensor import Tensor, current_tape

Operand = Union[Tensor, np.ndarray, float, int]

_TINY = np.finfo(np.float64).tiny
_SIGMOID_HI = np.nextafter(1.0, 0.0)


def as_tensor(x: Operand) -> Tensor:
    """Wrap constants as untracked tensors; tensors pass through."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _emit(op: str, inputs: Sequence[Tensor], out_data: np.ndarray, backward_fn) -> Tensor:
    tape = current_tape()
    if tape is not None and any(t.grad_id is not None for t in inputs):
        return tape.record(op, inputs, out_data, backward_fn)
    return Tensor(out_data)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast dimensions so grad matches shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for dim, size in enumerate(shape):
        if size == 1 and grad.shape[dim] != 1:
            grad = grad.sum(axis=dim, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}")


# ===================
# Elementwise
# ===================

def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", (a, b), out, backward)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit("sub", (a, b), out, backward)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    out = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit("mul", (a, b), out, backward)


def scale(x: Operand, factor: float) -> Tensor:
    x = as_tensor(x)
    factor = float(factor)

    def backward(g):
        return (g * factor,)

    return _emit("scale", (x,), x.data * factor, backward)


def relu(x: Operand) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return _emit("relu", (x,), np.where(mask, x.data, 0.0), backward)


def sigmoid(x: Operand) -> Tensor:
    """Logistic function, kept strictly inside (0, 1) at fp64."""
    x = as_tensor(x)
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    e = np.exp(xd[~pos])
    out[~pos] = e / (1.0 + e)
    out = np.clip(out, _TINY, _SIGMOID_HI)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _emit("sigmoid", (x,), out, backward)


def log(x: Operand) -> Tensor:
    x = as_tensor(x)
    if x.size and (x.data <= 0).any():
        raise NumericError("log of a non-positive value")

    def backward(g):
        return (g / x.data,)

    return _emit("log", (x,), np.log(x.data), backward)


def power(x: Operand, exponent: float) -> Tensor:
    """x ** exponent for x >= 0."""
    x = as_tensor(x)
    exponent = float(exponent)
    if x.size and (x.data < 0).any():
        raise NumericError("power of a negative value")
    out = x.data ** exponent

    def backward(g):
        if exponent == 0.0:
            return (np.zeros(x.shape),)
        return (g * exponent * x.data ** (exponent - 1.0),)

    return _emit("power", (x,), out, backward)


def abs(x: Operand) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    sign = np.sign(x.data)

    def backward(g):
        return (g * sign,)

    return _emit("abs", (x,), np.abs(x.data), backward)


# ===================
# Linear algebra
# ===================

def matmul(a: Operand, b: Operand) -> Tensor:
    """Product of an m x k and a k x n matrix."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _emit("matmul", (a, b), a.data @ b.data, backward)


# ===================
# Reductions
# ===================

def softmax(x: Operand, axis: int = -1) -> Tensor:
    """Max-shifted softmax; outputs are positive and sum to one along axis."""
    x = as_tensor(x)
    if x.size == 0 or x.ndim == 0:
        raise ShapeError("softmax of an empty input")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    out = np.maximum(out, _TINY)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", (x,), out, backward)


def max_reduce(x: Operand, axis: Optional[int] = None) -> Tensor:
    """Maximum along axis; the gradient goes to the first maximal entry."""
    x = as_tensor(x)
    if x.size == 0:
        raise ShapeError("max_reduce of an empty input")
    if axis is None:
        flat = int(np.argmax(x.data))
        out = x.data.reshape(-1)[flat]

        def backward(g):
            gx = np.zeros(x.size)
            gx[flat] = g
            return (gx.reshape(x.shape),)

        return _emit("max_reduce", (x,), np.asarray(out), backward)

    axis = axis % x.ndim
    idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis).squeeze(axis)

    def backward(g):
        gx = np.zeros(x.shape)
        np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _emit("max_reduce", (x,), out, backward)


def sum(x: Operand, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit("sum", (x,), np.asarray(out), backward)


def mean(x: Operand, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / max(count, 1))


# ===================
# Shape
# ===================

def reshape(x: Operand, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} to {tuple(shape)}")

    def backward(g):
        return (g.reshape(x.shape),)

    return _emit("reshape", (x,), out, backward)


def concat(tensors: Sequence[Operand], axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("concat of nothing")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: {e}")
    ax = axis % out.ndim
    bounds = np.cumsum([p.shape[ax] for p in parts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _emit("concat", parts, out, backward)


def take(x: Operand, indices, axis: int = 0) -> Tensor:
    """Gather entries along axis (the slicing primitive)."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64)
    ax = axis % x.ndim
    if idx.size and (idx.min() < -x.shape[ax] or idx.max() >= x.shape[ax]):
        raise ShapeError(f"take: index out of range for axis of size {x.shape[ax]}")
    out = np.take(x.data, idx, axis=ax)

    def backward(g):
        gx = np.zeros(x.shape)
        np.add.at(np.moveaxis(gx, ax, 0), idx, np.moveaxis(g, ax, 0))
        return (gx,)

    return _emit("take", (x,), out, backward)


# ===================
# Spatial
# ===================

def bilinear_sample(fmap: Operand, uv) -> Tuple[Tensor, np.ndarray]:
    """
    Sample an H x W x C map at continuous pixel coordinates.

    Args:
        fmap: Feature map, rows indexed by v and columns by u
        uv: One (u, v) pair or an N x 2 array of pairs

    Returns:
        (samples, clipped): samples is C or N x C; coordinates outside
        [0, W-1] x [0, H-1] give zero rows and clipped=True. The gradient
        reaches the map values only.
    """
    fmap = as_tensor(fmap)
    if fmap.ndim != 3:
        raise ShapeError(f"bilinear_sample expects an H x W x C map, got {fmap.shape}")
    H, W, C = fmap.shape
    pts = np.asarray(uv, dtype=np.float64)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    u, v = pts[:, 0], pts[:, 1]

    inside = np.isfinite(u) & np.isfinite(v) & (u >= 0) & (u <= W - 1) & (v >= 0) & (v <= H - 1)
    uc = np.where(inside, u, 0.0)
    vc = np.where(inside, v, 0.0)
    x0 = np.floor(uc).astype(np.int64)
    y0 = np.floor(vc).astype(np.int64)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    wx = uc - x0
    wy = vc - y0
    keep = inside.astype(np.float64)
    w00 = ((1.0 - wx) * (1.0 - wy) * keep)[:, None]
    w01 = (wx * (1.0 - wy) * keep)[:, None]
    w10 = ((1.0 - wx) * wy * keep)[:, None]
    w11 = (wx * wy * keep)[:, None]

    data = fmap.data
    out = w00 * data[y0, x0] + w01 * data[y0, x1] + w10 * data[y1, x0] + w11 * data[y1, x1]

    def backward(g):
        g = g.reshape(-1, C)
        gmap = np.zeros(fmap.shape)
        np.add.at(gmap, (y0, x0), w00 * g)
        np.add.at(gmap, (y0, x1), w01 * g)
        np.add.at(gmap, (y1, x0), w10 * g)
        np.add.at(gmap, (y1, x1), w11 * g)
        return (gmap,)

    clipped = ~inside
    if single:
        return _emit("bilinear_sample", (fmap,), out[0], backward), bool(clipped[0])
    return _emit("bilinear_sample", (fmap,), out, backward), clipped


_TAPS = [(ki, kj) for ki in range(3) for kj in range(3)]


def conv3x3(x: Operand, weight: Operand, bias: Operand) -> Tensor:
    """Dense 3 x 3 convolution, zero padding, stride 1: H x W x Cin -> H x W x Cout."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 3:
        raise ShapeError(f"conv3x3 expects an H x W x C input, got {x.shape}")
    H, W, Cin = x.shape
    if weight.ndim != 4 or weight.shape[:3] != (3, 3, Cin):
        raise ShapeError(f"conv3x3 weight {weight.shape} does not fit {Cin} input channels")
    Cout = weight.shape[3]
    if bias.shape != (Cout,):
        raise ShapeError(f"conv3x3 bias {bias.shape} does not fit {Cout} output channels")

    xp = np.pad(x.data, ((1, 1), (1, 1), (0, 0)))
    cols = np.stack([xp[ki:ki + H, kj:kj + W, :] for ki, kj in _TAPS], axis=2)
    cols = cols.reshape(H * W, 9 * Cin)
    wmat = weight.data.reshape(9 * Cin, Cout)
    out = (cols @ wmat + bias.data).reshape(H, W, Cout)

    def backward(g):
        g2 = g.reshape(H * W, Cout)
        gw = (cols.T @ g2).reshape(weight.shape)
        gb = g2.sum(axis=0)
        gcols = (g2 @ wmat.T).reshape(H, W, 9, Cin)
        gxp = np.zeros((H + 2, W + 2, Cin))
        for k, (ki, kj) in enumerate(_TAPS):
            gxp[ki:ki + H, kj:kj + W, :] += gcols[:, :, k, :]
        return gxp[1:-1, 1:-1, :], gw, gb

    return _emit("conv3x3", (x, weight, bias), out, backward)


def layer_norm(x: Operand, gamma: Operand, beta: Operand, eps: float = 1e-5) -> Tensor:
    """Normalize over the trailing axis, then apply per-channel scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    C = x.shape[-1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeError(f"layer_norm scales {gamma.shape}/{beta.shape} do not fit width {C}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        ggamma = (g * xhat).reshape(-1, C).sum(axis=0)
        gbeta = g.reshape(-1, C).sum(axis=0)
        dxhat = g * gamma.data
        gx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, ggamma, gbeta

    return _emit("layer_norm", (x, gamma, beta), out, backward)


def scatter_max(values: Operand, index, n_out: int) -> Tensor:
    """
    Per-slot elementwise max of N x C rows grouped by index.

    Slots that receive no row are zero. Ties go to the lowest row index.
    """
    values = as_tensor(values)
    if values.ndim != 2:
        raise ShapeError(f"scatter_max expects N x C values, got {values.shape}")
    N, C = values.shape
    idx = np.asarray(index, dtype=np.int64).reshape(-1)
    if idx.shape[0] != N:
        raise ShapeError(f"scatter_max: {idx.shape[0]} indices for {N} rows")
    if N and (idx.min() < 0 or idx.max() >= n_out):
        raise ShapeError(f"scatter_max: index out of range for {n_out} slots")

    out = np.full((n_out, C), -np.inf)
    winners = np.full((n_out, C), N, dtype=np.int64)
    if N:
        np.maximum.at(out, idx, values.data)
        hit = values.data == out[idx]
        np.minimum.at(winners, idx, np.where(hit, np.arange(N)[:, None], N))
    out[np.isneginf(out)] = 0.0

    def backward(g):
        gv = np.zeros((N, C))
        slots, chans = np.nonzero(winners < N)
        gv[winners[slots, chans], chans] = g[slots, chans]
        return (gv,)

    return _emit("scatter_max", (values,), out, backward)
