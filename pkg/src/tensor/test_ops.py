"""
Tests for the primitive ops and the tape.
"""

import numpy as np
import pytest

from src.errors import ContractError, NumericError, ShapeError
from src.tensor import ops
from src.tensor.tensor import GradTape, Tensor, backward


def test_tensor_rejects_non_finite():
    with pytest.raises(NumericError):
        Tensor([1.0, np.nan])
    with pytest.raises(NumericError):
        Tensor([np.inf])


def test_tensor_is_read_only():
    t = Tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        t.data[0] = 5.0


# ==================
# matmul
# ==================

def test_matmul_identity():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(ops.matmul(np.eye(2), a).data, a)


def test_matmul_selector_row():
    out = ops.matmul([[1.0, 0.0]], [[5.0], [7.0]])
    assert out.data.tolist() == [[5.0]]


@pytest.mark.parametrize("seed", range(5))
def test_matmul_matches_triple_loop(seed):
    r = np.random.default_rng(seed)
    a, b = r.normal(size=(3, 4)), r.normal(size=(4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    assert np.allclose(ops.matmul(a, b).data, expected, atol=1e-12)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        ops.matmul(np.ones((2, 3)), np.ones((2, 3)))


# ==================
# softmax / sigmoid
# ==================

def test_softmax_symmetric():
    assert ops.softmax([0.0, 0.0]).data.tolist() == [0.5, 0.5]


def test_softmax_large_logit_is_stable():
    out = ops.softmax([1000.0, 0.0]).data
    assert out[0] == pytest.approx(1.0)
    assert 0 < out[1] < 1e-300


def test_softmax_matches_direct_formula():
    v = np.array([1.0, 2.0, 3.0])
    direct = np.exp(v) / np.exp(v).sum()
    assert np.allclose(ops.softmax(v).data, direct, rtol=0, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_softmax_sums_to_one_and_permutes(seed):
    r = np.random.default_rng(seed)
    v = r.normal(scale=5.0, size=9)
    out = ops.softmax(v).data
    assert abs(out.sum() - 1.0) <= 1e-12
    assert (out > 0).all()
    perm = r.permutation(9)
    assert np.allclose(ops.softmax(v[perm]).data, out[perm], atol=1e-15)


def test_softmax_empty():
    with pytest.raises(ShapeError):
        ops.softmax(np.zeros(0))


def test_sigmoid_points():
    assert ops.sigmoid(0.0).item() == 0.5
    hi = ops.sigmoid(40.0).item()
    assert 1 - 1e-15 < hi < 1.0


def test_sigmoid_reflection():
    x = np.linspace(-50, 50, 401)
    total = ops.sigmoid(x).data + ops.sigmoid(-x).data
    assert np.abs(total - 1.0).max() <= 1e-15
    assert (ops.sigmoid(x).data > 0).all() and (ops.sigmoid(x).data < 1).all()


# ==================
# backward
# ==================

def test_backward_linear():
    with GradTape() as tape:
        x = tape.watch(np.arange(4.0))
        loss = ops.sum(x)
    grads = backward(tape, loss)
    assert grads[x.grad_id].data.tolist() == [1.0] * 4


def test_backward_sigmoid_at_zero():
    with GradTape() as tape:
        x = tape.watch(np.zeros(3))
        loss = ops.sum(ops.sigmoid(x))
    grads = backward(tape, loss)
    assert grads[x.grad_id].data.tolist() == [0.25, 0.25, 0.25]


def test_backward_untouched_leaf_gets_zeros():
    with GradTape() as tape:
        x = tape.watch(np.ones(2))
        unused = tape.watch(np.ones((2, 3)))
        loss = ops.sum(ops.mul(x, x))
    grads = backward(tape, loss)
    assert grads[unused.grad_id].data.shape == (2, 3)
    assert not grads[unused.grad_id].data.any()
    assert grads[x.grad_id].data.tolist() == [2.0, 2.0]


def test_backward_reused_value_accumulates():
    with GradTape() as tape:
        x = tape.watch(np.array([3.0]))
        y = x * x + x
        loss = ops.sum(y)
    assert backward(tape, loss)[x.grad_id].data.tolist() == [7.0]


def test_backward_non_scalar_loss():
    with GradTape() as tape:
        x = tape.watch(np.ones(3))
        y = ops.relu(x)
    with pytest.raises(ContractError):
        backward(tape, y)


def test_ops_outside_tape_are_untracked():
    out = ops.add(np.ones(2), np.ones(2))
    assert not out.tracked


# ==================
# reductions and shape ops
# ==================

def test_max_reduce_ties_go_to_first():
    with GradTape() as tape:
        x = tape.watch(np.array([[1.0, 3.0, 3.0], [2.0, 2.0, 0.0]]))
        loss = ops.sum(ops.max_reduce(x, axis=1))
    g = backward(tape, loss)[x.grad_id].data
    assert g.tolist() == [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]


def test_concat_and_take_gradients_route_back():
    with GradTape() as tape:
        a = tape.watch(np.array([1.0, 2.0]))
        b = tape.watch(np.array([3.0]))
        c = ops.concat([a, b], axis=0)
        loss = ops.sum(ops.take(c, [2, 2, 0]))
    grads = backward(tape, loss)
    assert grads[a.grad_id].data.tolist() == [1.0, 0.0]
    assert grads[b.grad_id].data.tolist() == [2.0]


def test_log_rejects_non_positive():
    with pytest.raises(NumericError):
        ops.log([1.0, 0.0])


# ==================
# bilinear_sample
# ==================

def test_bilinear_centroid():
    fmap = np.array([[0.0, 1.0], [2.0, 3.0]])[:, :, None]
    out, clipped = ops.bilinear_sample(fmap, (0.5, 0.5))
    assert out.data.tolist() == [1.5]
    assert clipped is False


def test_bilinear_exact_on_nodes(rng):
    fmap = rng.normal(size=(4, 5, 3))
    for v in range(4):
        for u in range(5):
            out, _ = ops.bilinear_sample(fmap, (u, v))
            assert np.array_equal(out.data, fmap[v, u])


def test_bilinear_linear_between_nodes(rng):
    fmap = rng.normal(size=(3, 3, 2))
    out, _ = ops.bilinear_sample(fmap, (0.25, 1.0))
    assert np.allclose(out.data, 0.75 * fmap[1, 0] + 0.25 * fmap[1, 1], atol=1e-14)


def test_bilinear_out_of_bounds():
    fmap = np.ones((2, 2, 3))
    out, clipped = ops.bilinear_sample(fmap, (-5.0, -5.0))
    assert out.data.tolist() == [0.0, 0.0, 0.0]
    assert clipped is True


def test_bilinear_batch_flags():
    fmap = np.ones((3, 3, 1))
    out, clipped = ops.bilinear_sample(fmap, [[1.0, 1.0], [2.5, 0.0], [2.0, 2.0]])
    assert clipped.tolist() == [False, True, False]
    assert out.data[:, 0].tolist() == [1.0, 0.0, 1.0]


# ==================
# conv / norm / scatter
# ==================

def _conv_loop(x, w, b):
    H, W, _ = x.shape
    out = np.zeros((H, W, w.shape[3]))
    for i in range(H):
        for j in range(W):
            acc = b.copy()
            for ki in range(3):
                for kj in range(3):
                    ii, jj = i + ki - 1, j + kj - 1
                    if 0 <= ii < H and 0 <= jj < W:
                        acc = acc + x[ii, jj] @ w[ki, kj]
            out[i, j] = acc
    return out


def test_conv3x3_matches_loop(rng):
    x = rng.normal(size=(5, 4, 3))
    w = rng.normal(size=(3, 3, 3, 2))
    b = rng.normal(size=2)
    assert np.allclose(ops.conv3x3(x, w, b).data, _conv_loop(x, w, b), atol=1e-12)


def test_conv3x3_rejects_bad_weight():
    with pytest.raises(ShapeError):
        ops.conv3x3(np.zeros((4, 4, 3)), np.zeros((3, 3, 2, 2)), np.zeros(2))


def test_layer_norm_normalizes(rng):
    x = rng.normal(loc=3.0, scale=2.0, size=(4, 6))
    out = ops.layer_norm(x, np.ones(6), np.zeros(6), eps=1e-12).data
    assert np.allclose(out.mean(axis=-1), 0.0, atol=1e-12)
    assert np.allclose(out.std(axis=-1), 1.0, atol=1e-9)


def test_scatter_max_pools_and_zero_fills():
    vals = np.array([[1.0, 5.0], [3.0, 2.0], [-4.0, -1.0]])
    out = ops.scatter_max(vals, [0, 0, 2], 4).data
    assert out.tolist() == [[3.0, 5.0], [0.0, 0.0], [-4.0, -1.0], [0.0, 0.0]]


def test_scatter_max_gradient_goes_to_first_winner():
    with GradTape() as tape:
        v = tape.watch(np.array([[2.0], [2.0], [1.0]]))
        loss = ops.sum(ops.scatter_max(v, [1, 1, 1], 2))
    assert backward(tape, loss)[v.grad_id].data[:, 0].tolist() == [1.0, 0.0, 0.0]
