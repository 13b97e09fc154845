"""
Association windows, grid point generation and farthest point sampling.
"""

import math

import numpy as np
import pytest

from src.errors import ConfigError, ContractError
from src.geometry.frames import wrap_angle
from src.head.proposals import Proposal
from src.radar.points import RadarPoint
from src.refine.association import AssociationConfig, soft_polar_associate
from src.refine.fps import farthest_point_sampling, fps, pairwise_distance
from src.refine.grid import (
    AdaptiveGridSampler,
    FixedGridSampler,
    RadarGridSampler,
    gen_grid_points,
    make_sampler,
    yaw_normal,
)
from src.tensor.tensor import Tensor


def _point(x, y, z=0.5):
    return RadarPoint((x, y, z), 5.0, (0.0, 0.0))


def _proposal(center=(10.0, 2.0, 0.5), velocity=(1.0, 1.0), yaw=0.4, size=(1.8, 4.0, 1.5)):
    return Proposal(center, size, yaw, velocity, 0.7, 0, Tensor(np.zeros(4)))


# ==================
# association
# ==================

def test_point_at_center_is_associated():
    cfg = AssociationConfig()
    assert soft_polar_associate((7.0, -3.0, 0.0), [_point(7.0, -3.0)], cfg).tolist() == [0]


def test_window_edges_are_closed():
    cfg = AssociationConfig(azimuth_window=0.1, radial_window=2.0)
    w = cfg.azimuth_window
    edge = _point(10.0 * math.cos(w), 10.0 * math.sin(w))
    beyond = _point(10.0 * math.cos(w + 1e-6), 10.0 * math.sin(w + 1e-6))
    far = _point(12.0, 0.0)
    farther = _point(12.0 + 1e-6, 0.0)
    idx = soft_polar_associate((10.0, 0.0), [edge, beyond, far, farther], cfg)
    assert idx.tolist() == [0, 2]


def test_azimuth_window_wraps_at_pi():
    cfg = AssociationConfig(azimuth_window=0.05, radial_window=1.0)
    center = (-10.0, 1e-3)
    other_side = _point(10.0 * math.cos(-math.pi + 0.01), 10.0 * math.sin(-math.pi + 0.01))
    assert soft_polar_associate(center, [other_side], cfg).tolist() == [0]


def test_empty_cloud_associates_nothing():
    assert len(soft_polar_associate((5.0, 5.0), [], AssociationConfig())) == 0


def test_windows_must_be_positive():
    with pytest.raises(ConfigError):
        AssociationConfig(azimuth_window=0.0, radial_window=1.0)


@pytest.mark.parametrize("seed", range(10))
def test_association_matches_polar_predicate(seed):
    r = np.random.default_rng(seed)
    cfg = AssociationConfig.from_degrees(float(r.uniform(2, 20)), float(r.uniform(0.5, 5)))
    center = r.uniform(-20, 20, size=3)
    points = [_point(*r.uniform(-25, 25, size=2)) for _ in range(200)]
    expected = []
    for k, p in enumerate(points):
        d_az = abs(wrap_angle(math.atan2(p.position[1], p.position[0]) - math.atan2(center[1], center[0])))
        d_r = abs(math.hypot(p.position[0], p.position[1]) - math.hypot(center[0], center[1]))
        if d_az <= cfg.azimuth_window and d_r <= cfg.radial_window:
            expected.append(k)
    assert soft_polar_associate(center, points, cfg).tolist() == expected


# ==================
# grid points
# ==================

def test_grid_hand_example():
    g = gen_grid_points((0.0, 0.0), (0.0, 2.0), 3, 0.5, 3.0)
    assert np.array_equal(g, [[0.0, -1.0], [0.0, 0.0], [0.0, 1.0]])


def test_fast_tangential_speed_is_clamped():
    g = gen_grid_points((1.0, 1.0), (10.0, 0.0), 4, 0.5, 3.0)
    assert np.linalg.norm(g[-1] - g[0]) == pytest.approx(3.0, abs=1e-12)
    slow = gen_grid_points((1.0, 1.0), (0.1, 0.0), 4, 0.5, 3.0)
    assert np.linalg.norm(slow[-1] - slow[0]) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("T", [3, 5, 7, 9])
def test_odd_T_middle_point_is_the_return(T, rng):
    u = rng.normal(size=2) * 10
    g = gen_grid_points(u, rng.normal(size=2), T, 0.5, 3.0)
    assert np.array_equal(g[(T - 1) // 2], u)


@pytest.mark.parametrize("seed", range(10))
def test_grid_points_are_evenly_spaced_on_a_line(seed):
    r = np.random.default_rng(seed)
    T = int(r.integers(2, 10))
    rho_min, rho_max = 0.5, 3.0
    v = r.normal(size=2) * 3
    g = gen_grid_points(r.normal(size=2), v, T, rho_min, rho_max)
    gamma = min(max(np.linalg.norm(v), rho_min), rho_max)
    steps = np.diff(g, axis=0)
    assert np.allclose(np.linalg.norm(steps, axis=1), gamma / (T - 1), atol=1e-12)
    direction = v / np.linalg.norm(v)
    cross = steps[:, 0] * direction[1] - steps[:, 1] * direction[0]
    assert np.abs(cross).max() <= 1e-12


def test_still_target_falls_back_to_yaw_normal():
    normal = yaw_normal(0.3)
    g = gen_grid_points((2.0, 0.0), (0.0, 0.0), 3, 0.5, 3.0, normal)
    assert g[2] - g[0] == pytest.approx(0.5 * normal)


def test_grid_needs_two_points():
    with pytest.raises(ContractError):
        gen_grid_points((0.0, 0.0), (1.0, 0.0), 1, 0.5, 3.0)


def test_adaptive_sampler_layout(rng):
    prop = _proposal()
    positions = rng.normal(size=(3, 3)) + [10.0, 2.0, 0.0]
    grid = AdaptiveGridSampler(5, 0.5, 3.0).sample(prop, positions)
    assert len(grid) == 15
    assert grid.source.tolist() == [0] * 5 + [1] * 5 + [2] * 5
    assert grid.slot.tolist() == list(range(5)) * 3
    assert np.all(grid.positions[:, 2] == 0.5)
    assert np.array_equal(grid.positions[2, :2], positions[0, :2])


def test_adaptive_sampler_moves_along_tangential_velocity():
    # purely radial motion has no tangential part: fallback direction
    prop = _proposal(center=(10.0, 0.0, 0.0), velocity=(5.0, 0.0), yaw=0.0)
    grid = AdaptiveGridSampler(3, 0.5, 3.0).sample(prop, np.array([[10.0, 0.0, 0.0]]))
    assert grid.positions[:, :2] == pytest.approx([[10.0, -0.25], [10.0, 0.0], [10.0, 0.25]])


def test_fixed_sampler_fills_the_box():
    prop = _proposal(center=(0.0, 0.0, 1.0), yaw=0.0, size=(2.0, 4.0, 1.5))
    grid = FixedGridSampler(7, 0.5, 3.0, fixed_side=4).sample(prop, np.zeros((0, 3)))
    assert len(grid) == 16
    assert np.abs(grid.positions[:, 0]).max() == pytest.approx(1.5)
    assert np.abs(grid.positions[:, 1]).max() == pytest.approx(0.75)
    assert np.all(grid.source == -1)


def test_radar_sampler_uses_returns(rng):
    positions = rng.normal(size=(4, 3))
    grid = RadarGridSampler(7, 0.5, 3.0).sample(_proposal(), positions)
    assert np.array_equal(grid.positions[:, :2], positions[:, :2])
    assert np.all(grid.positions[:, 2] == 0.5)


def test_unknown_grid_mode():
    assert isinstance(make_sampler("fixed", 7, 0.5, 3.0), FixedGridSampler)
    with pytest.raises(ConfigError):
        make_sampler("spiral", 7, 0.5, 3.0)


# ==================
# farthest point sampling
# ==================

def _greedy_oracle(points, M, seed):
    chosen = [seed]
    while len(chosen) < M:
        best, best_d = None, -1.0
        for i in range(len(points)):
            if i in chosen:
                continue
            d = min(pairwise_distance(points[i], points[j]) for j in chosen)
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    return chosen


def test_collinear_example():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    assert farthest_point_sampling(pts, 2, 0).tolist() == [0, 3]
    assert fps(pts, 2, (-1.0, 0.0)).tolist() == [0, 3]


def test_few_candidates_are_all_returned(rng):
    pts = rng.normal(size=(5, 2))
    assert fps(pts, 5, (0.0, 0.0)).tolist() == [0, 1, 2, 3, 4]
    assert fps(pts, 64, (0.0, 0.0)).tolist() == [0, 1, 2, 3, 4]


def test_seed_is_nearest_to_center():
    pts = np.array([[5.0, 0.0], [1.0, 0.0], [-4.0, 0.0], [1.0, 0.0]])
    assert fps(pts, 2, (0.9, 0.0))[0] == 1


def test_fps_needs_candidates():
    with pytest.raises(ContractError):
        fps(np.zeros((0, 2)), 3, (0.0, 0.0))


def test_fps_matches_greedy_oracle():
    r = np.random.default_rng(2024)
    for _ in range(500):
        n = int(r.integers(2, 65))
        M = int(r.integers(1, n))
        pts = r.uniform(-5, 5, size=(n, 2))
        if r.uniform() < 0.2:
            pts = np.round(pts)  # duplicates and exact ties
        center = r.uniform(-5, 5, size=2)
        dists = pairwise_distance(pts, center)
        seed = int(np.flatnonzero(dists == dists.min())[0])
        assert fps(pts, M, center).tolist() == _greedy_oracle(pts, M, seed)
