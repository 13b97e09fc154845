"""
Proposal attention, grid pooling and the refinement stage.
"""

import math

import numpy as np
import pytest

from src.camera.features import CameraFeatures
from src.errors import ContractError, ShapeError
from src.geometry.boxes import Box3D
from src.geometry.camera import CameraModel
from src.head.proposals import Proposal
from src.radar.points import RadarPoint
from src.refine.association import AssociationConfig
from src.refine.attention import (
    PointAttentionParams,
    importance_weights,
    positional_encoding,
    proposal_radar_attention,
)
from src.refine.pooling import SetAbsParams, pool_image_features, set_abstraction
from src.refine.refiner import (
    RefineOptions,
    RefinementParams,
    apply_residuals,
    fuse_and_refine,
    object_feature,
    proposal_residual,
    refine,
    residual_targets,
)
from src.tensor import ops
from src.tensor.gradcheck import check_gradients
from src.tensor.mlp import mlp_values
from src.tensor.params import ParamStore
from src.tensor.tensor import Tensor

C = 4


def _camera(name="front", mount=(0.0, 0.0, 1.5), yaw=0.0):
    return CameraModel.mounted(name, yaw, mount, 16.0, (64, 32), (1.0,))


def _raw(r, k, center=(6.0, 0.5, 0.5), spread=0.3):
    pos = np.asarray(center) + r.uniform(-spread, spread, size=(k, 3))
    rest = np.column_stack([r.uniform(-5, 15, k), r.normal(size=(k, 2)), r.uniform(0, 0.4, k)])
    return np.column_stack([pos, rest])


def _proposal(r, center=(6.0, 0.5, 0.5), velocity=(1.0, 2.0)):
    return Proposal(center, (1.8, 4.0, 1.5), 0.2, velocity, 0.6, 0, Tensor(r.normal(size=C)))


def _override(store, **values):
    arrays = dict(store.arrays())
    for name, value in values.items():
        name = name.replace("__", ".")
        arrays[name] = np.broadcast_to(value, arrays[name].shape).copy()
    return ParamStore.from_arrays(arrays)


def _softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


# ==================
# proposal attention
# ==================

def test_single_return_gets_full_weight(rng):
    params = PointAttentionParams.build(ParamStore(seed=1), "p", C, 8)
    raw = _raw(rng, 1)
    out = proposal_radar_attention((6.0, 0.5, 0.5), raw, params).data
    assert importance_weights((6.0, 0.5, 0.5), raw, params).data.tolist() == [1.0]
    assert np.array_equal(out, mlp_values(params.mlp3, raw))


def test_identical_returns_split_evenly(rng):
    params = PointAttentionParams.build(ParamStore(seed=1), "p", C, 8)
    raw = np.repeat(_raw(rng, 1), 2, axis=0)
    assert importance_weights((6.0, 0.5, 0.5), raw, params).data.tolist() == [0.5, 0.5]


@pytest.mark.parametrize("seed", range(5))
def test_attention_matches_formula(seed):
    r = np.random.default_rng(seed)
    params = PointAttentionParams.build(ParamStore(seed=seed), "p", C, 8)
    center = np.array([6.0, 0.5, 0.5])
    raw = _raw(r, 5)
    pe = positional_encoding(center - raw[:, :3])
    s = mlp_values(params.mlp2, np.concatenate([mlp_values(params.mlp1, raw), pe], axis=1))[:, 0]
    w = _softmax(s)
    expected = w[:, None] * mlp_values(params.mlp3, raw)
    weights = importance_weights(center, raw, params).data
    assert abs(weights.sum() - 1.0) <= 1e-12
    assert np.abs(weights - w).max() <= 1e-12
    assert np.abs(proposal_radar_attention(center, raw, params).data - expected).max() <= 1e-12


def test_attention_ignores_score_shift(rng):
    store = ParamStore(seed=3)
    params = PointAttentionParams.build(store, "p", C, 8)
    shifted = PointAttentionParams.build(_override(store, p__mlp2__1__bias=7.5), "p", C, 8)
    raw = _raw(rng, 6)
    a = importance_weights((6.0, 0.5, 0.5), raw, params).data
    b = importance_weights((6.0, 0.5, 0.5), raw, shifted).data
    assert np.abs(a - b).max() <= 1e-12


def test_uniform_weights_without_attention(rng):
    params = PointAttentionParams.build(ParamStore(seed=1), "p", C, 8)
    raw = _raw(rng, 4)
    out = proposal_radar_attention((6.0, 0.5, 0.5), raw, params, attend=False).data
    assert out == pytest.approx(mlp_values(params.mlp3, raw) / 4, abs=1e-15)


def test_attention_needs_a_return():
    params = PointAttentionParams.build(ParamStore(seed=1), "p", C, 8)
    with pytest.raises(ContractError):
        proposal_radar_attention((0.0, 0.0, 0.0), np.zeros((0, 7)), params)


def test_positional_encoding_of_zero_offset():
    pe = positional_encoding(np.zeros((2, 3)))
    assert pe.shape == (2, 48)
    assert np.array_equal(pe.reshape(2, 3, 2, 8)[:, :, 0], np.zeros((2, 3, 8)))
    assert np.array_equal(pe.reshape(2, 3, 2, 8)[:, :, 1], np.ones((2, 3, 8)))


@pytest.mark.parametrize("seed", range(20))
def test_attention_gradients(seed):
    r = np.random.default_rng(seed)
    store = ParamStore(seed=seed)
    PointAttentionParams.build(store, "p", C, 8)
    names = store.names()
    raw = _raw(r, 3)
    target = r.normal(size=(3, C))

    def fn(*tensors):
        params = PointAttentionParams.build(ParamStore.from_tensors(dict(zip(names, tensors))), "p", C, 8)
        return ops.sum(ops.mul(proposal_radar_attention((6.0, 0.5, 0.5), raw, params), target))

    assert check_gradients(fn, [store[n].data for n in names], rng=r) <= 1e-4


# ==================
# set abstraction
# ==================

def test_empty_balls_give_zeros(rng):
    params = SetAbsParams.build(ParamStore(seed=1), "sa", C, C, 8)
    feats = Tensor(rng.normal(size=(3, C)))
    positions = np.array([[10.0, 0.0, 0.0], [10.5, 0.0, 0.0], [12.0, 1.0, 0.0]])
    grid = np.array([[0.0, 0.0, 0.0], [5.0, 5.0, 0.0]])
    assert not set_abstraction(feats, positions, grid, params).data.any()


def test_coincident_point_encodes_zero_offset(rng):
    params = SetAbsParams.build(ParamStore(seed=1), "sa", C, C, 8)
    a = rng.normal(size=(1, C))
    g = np.array([[1.0, 2.0, 0.5]])
    out = set_abstraction(Tensor(a), g.copy(), g, params).data
    x = np.concatenate([a, np.zeros((1, 3))], axis=1)
    expected = np.concatenate([mlp_values(m, x) for m in params.mlps], axis=1)
    assert out == pytest.approx(expected, abs=1e-14)


def test_ball_query_uses_bev_distance(rng):
    params = SetAbsParams.build(ParamStore(seed=1), "sa", C, C, 8, radii=(0.8, 1.6))
    a = Tensor(np.abs(rng.normal(size=(1, C))) + 1.0)
    out = set_abstraction(a, np.array([[1.2, 0.0, 5.0]]), np.zeros((1, 3)), params).data
    # outside the small radius, inside the large one despite the height gap
    assert not out[0, :C // 2].any()
    x = np.concatenate([a.data, [[1.2, 0.0, 5.0]]], axis=1)
    assert out[0, C // 2:] == pytest.approx(mlp_values(params.mlps[1], x)[0], abs=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_set_abstraction_is_permutation_invariant(seed):
    r = np.random.default_rng(seed)
    params = SetAbsParams.build(ParamStore(seed=seed), "sa", C, C, 8)
    feats = r.normal(size=(6, C))
    positions = r.uniform(-1.5, 1.5, size=(6, 3))
    grid = r.uniform(-1, 1, size=(4, 3))
    perm = r.permutation(6)
    a = set_abstraction(Tensor(feats), positions, grid, params).data
    b = set_abstraction(Tensor(feats[perm]), positions[perm], grid, params).data
    assert np.abs(a - b).max() <= 1e-12


def test_set_abstraction_width_must_split():
    with pytest.raises(ShapeError):
        SetAbsParams.build(ParamStore(), "sa", C, 5, 8, radii=(0.8, 1.6))


@pytest.mark.parametrize("seed", range(20))
def test_set_abstraction_gradients(seed):
    r = np.random.default_rng(seed)
    store = ParamStore(seed=seed)
    SetAbsParams.build(store, "sa", C, C, 8)
    names = store.names()
    positions = r.uniform(-1.5, 1.5, size=(3, 3))
    grid = r.uniform(-1, 1, size=(4, 3))
    target = r.normal(size=(4, C))

    def fn(feats, *tensors):
        params = SetAbsParams.build(ParamStore.from_tensors(dict(zip(names, tensors))), "sa", C, C, 8)
        return ops.sum(ops.mul(set_abstraction(feats, positions, grid, params), target))

    inputs = [r.normal(size=(3, C))] + [store[n].data for n in names]
    assert check_gradients(fn, inputs, rng=r) <= 1e-4


# ==================
# image pooling
# ==================

def _constant_features(camera, value):
    w, h = camera.feature_size(0)
    return CameraFeatures(camera, (Tensor(np.full((h, w, C), value)),))


def test_points_behind_cameras_pool_zeros():
    feats = [_constant_features(_camera(), 3.0)]
    out = pool_image_features(np.array([[-5.0, 0.0, 1.0], [-2.0, 1.0, 0.0]]), feats).data
    assert out.shape == (2, C)
    assert not out.any()


def test_constant_field_one_view():
    feats = [_constant_features(_camera(), 2.5)]
    out = pool_image_features(np.array([[5.0, 0.3, 1.0]]), feats).data
    assert out == pytest.approx(np.full((1, C), 2.5), abs=1e-14)


def test_two_views_are_averaged():
    feats = [
        _constant_features(_camera("a"), 1.0),
        _constant_features(_camera("b", mount=(0.0, 0.5, 1.5)), 4.0),
    ]
    out = pool_image_features(np.array([[6.0, 0.2, 1.0], [-6.0, 0.0, 1.0]]), feats).data
    assert out[0] == pytest.approx(np.full(C, 2.5), abs=1e-14)
    assert not out[1].any()


def test_pooling_without_cameras_uses_given_width():
    assert pool_image_features(np.zeros((3, 3)), [], channels=C).shape == (3, C)


# ==================
# refinement stage
# ==================

def _refine_params(store, T=3, M=4):
    return RefinementParams.build(store, C, 8, T=T, M=M, rho_min=0.5, rho_max=3.0)


def _scene(r):
    points = [
        RadarPoint(tuple(row[:3]), float(row[3]), tuple(row[4:6]), float(row[6]))
        for row in _raw(r, 3)
    ]
    camera = _camera()
    w, h = camera.feature_size(0)
    feats = [CameraFeatures(camera, (Tensor(r.normal(size=(h, w, C))),))]
    return points, feats


def test_zero_head_leaves_proposals_unchanged(rng):
    params = _refine_params(ParamStore(seed=2))
    points, feats = _scene(rng)
    props = [_proposal(rng), _proposal(rng, center=(-6.0, 3.0, 0.0))]
    out = refine(props, points, feats, params, RefineOptions())
    for before, after in zip(props, out):
        assert after.center == before.center
        assert after.size == before.size
        assert after.yaw == before.yaw
        assert after.velocity == before.velocity
        assert after.score == before.score


def test_proposals_without_radar_pass_through(rng):
    store = ParamStore(seed=2)
    _refine_params(store)
    params = _refine_params(_override(store, refine__head__1__weight=rng.normal(size=(8, 10))))
    points, feats = _scene(rng)
    lonely = _proposal(rng, center=(-10.0, -10.0, 0.0))
    (out,) = refine([lonely], points, feats, params, RefineOptions())
    assert out is lonely


def test_single_grid_point_pool_is_identity(rng):
    pts = Tensor(rng.normal(size=(1, C)))
    img = Tensor(rng.normal(size=(1, C)))
    assert np.array_equal(object_feature(pts, img).data, pts.data[0] + img.data[0])


@pytest.mark.parametrize("seed", range(10))
def test_refined_boxes_keep_invariants(seed):
    r = np.random.default_rng(seed)
    store = ParamStore(seed=seed)
    _refine_params(store)
    params = _refine_params(_override(store, refine__head__1__weight=r.normal(scale=3.0, size=(8, 10))))
    prop = _proposal(r)
    refined = fuse_and_refine(prop, Tensor(r.normal(size=(4, C))), Tensor(r.normal(size=(4, C))), params)
    assert min(refined.size) > 0
    assert -math.pi < refined.yaw <= math.pi
    assert 0.0 <= refined.score <= 1.0


def test_residual_targets_move_proposal_onto_gt(rng):
    prop = _proposal(rng)
    gt = Box3D((6.4, 0.1, 0.8), (2.0, 4.5, 1.6), -3.0, (0.5, -1.0), "car")
    moved = apply_residuals(prop, np.append(residual_targets(prop, gt), 0.0))
    assert moved.center == pytest.approx(gt.center, abs=1e-12)
    assert moved.size == pytest.approx(gt.size, abs=1e-12)
    assert moved.yaw == pytest.approx(gt.yaw, abs=1e-12)
    assert moved.velocity == pytest.approx(gt.velocity, abs=1e-12)
    assert moved.score == prop.score


def test_refinement_params_contract():
    with pytest.raises(ContractError):
        RefinementParams.build(ParamStore(), C, 8, T=1)
    with pytest.raises(ContractError):
        RefinementParams.build(ParamStore(), C, 8, rho_min=3.0, rho_max=0.5)
    with pytest.raises(ContractError):
        RefinementParams.build(ParamStore(), C, 8, M=0)


@pytest.mark.parametrize("seed", range(20))
def test_whole_stage_gradients(seed):
    r = np.random.default_rng(seed)
    store = ParamStore(seed=seed)
    _refine_params(store)
    store = _override(store, refine__head__1__weight=r.normal(size=(8, 10)))
    names = store.names()
    points, feats = _scene(r)
    raw = np.array([p.features() for p in points])
    camera = feats[0].camera
    center = (6.0, 0.5, 0.5)
    options = RefineOptions(AssociationConfig.from_degrees(10.0, 3.0))
    target = r.normal(size=10)

    def fn(latent, fmap, *tensors):
        params = _refine_params(ParamStore.from_tensors(dict(zip(names, tensors))))
        prop = Proposal(center, (1.8, 4.0, 1.5), 0.2, (1.0, 2.0), 0.6, 0, latent)
        residual = proposal_residual(prop, raw, [CameraFeatures(camera, (fmap,))], params, options)
        return ops.sum(ops.mul(residual, target))

    inputs = [r.normal(size=C), feats[0].level(0).data] + [store[n].data for n in names]
    assert check_gradients(fn, inputs, rng=r) <= 1e-4
