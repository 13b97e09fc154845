"""
Farthest point sampling.
"""

from typing import Sequence

import numpy as np

from src.errors import ContractError


def pairwise_distance(points: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Euclidean distance from every row of points to ref."""
    return np.sqrt(((points - ref) ** 2).sum(axis=-1))


def farthest_point_sampling(points: np.ndarray, M: int, seed_index: int) -> np.ndarray:
    """
    Greedy max-min selection starting at seed_index.

    Each step picks the unselected point whose distance to the selected set
    is largest; ties go to the lowest index.

    Returns:
        Indices in selection order
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n == 0:
        raise ContractError("farthest point sampling needs at least one candidate")
    M = min(M, n)
    selected = [int(seed_index)]
    nearest = pairwise_distance(pts, pts[seed_index])
    nearest[seed_index] = -np.inf
    while len(selected) < M:
        idx = int(np.argmax(nearest))
        selected.append(idx)
        nearest = np.minimum(nearest, pairwise_distance(pts, pts[idx]))
        nearest[selected] = -np.inf
    return np.array(selected, dtype=np.int64)


def fps(candidates: np.ndarray, M: int, center: Sequence[float]) -> np.ndarray:
    """
    Select M of the candidates, seeded at the one nearest to center.

    Returns every index in order when there are at most M candidates.
    """
    pts = np.asarray(candidates, dtype=np.float64)
    if len(pts) == 0:
        raise ContractError("farthest point sampling needs at least one candidate")
    if len(pts) <= M:
        return np.arange(len(pts))
    c = np.asarray(center, dtype=np.float64)[:pts.shape[1]]
    seed = int(np.argmin(pairwise_distance(pts, c)))
    return farthest_point_sampling(pts, M, seed)
