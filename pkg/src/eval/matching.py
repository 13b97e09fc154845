"""
Greedy center-distance matching.

Detections are visited by descending score; each takes the nearest still
unmatched ground-truth box of its class and is a true positive when the BEV
center distance is strictly below the threshold.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.eval.detections import Detection
from src.geometry.boxes import Box3D


@dataclass(frozen=True)
class MatchResult:
    threshold: float
    detections: Tuple[Detection, ...]        # visiting order
    matched: Tuple[Optional[Box3D], ...]     # per detection
    n_gt: int

    @property
    def tp(self) -> np.ndarray:
        return np.array([m is not None for m in self.matched], dtype=bool)

    @property
    def scores(self) -> np.ndarray:
        return np.array([d.score for d in self.detections])

    def pairs(self) -> List[Tuple[Detection, Box3D]]:
        return [(d, g) for d, g in zip(self.detections, self.matched) if g is not None]

    def precision_recall(self) -> Tuple[np.ndarray, np.ndarray]:
        """Precision and recall after each detection."""
        tp = np.cumsum(self.tp).astype(np.float64)
        fp = np.cumsum(~self.tp).astype(np.float64)
        if len(tp) == 0:
            return np.zeros(0), np.zeros(0)
        return tp / (tp + fp), tp / max(self.n_gt, 1)


def center_distance(det: Box3D, gt: Box3D) -> float:
    return math.hypot(det.center[0] - gt.center[0], det.center[1] - gt.center[1])


def match(dets: Sequence[Detection], gts: Sequence[Box3D], threshold: float) -> MatchResult:
    """Match one scene's detections against its ground truth."""
    ordered = sorted(dets, key=Detection.sort_key)
    taken = [False] * len(gts)
    matched: List[Optional[Box3D]] = []
    for det in ordered:
        best, best_d = -1, math.inf
        for j, gt in enumerate(gts):
            if taken[j] or gt.label != det.label:
                continue
            d = center_distance(det.box, gt)
            if d < best_d:
                best, best_d = j, d
        if best >= 0 and best_d < threshold:
            taken[best] = True
            matched.append(gts[best])
        else:
            matched.append(None)
    return MatchResult(float(threshold), tuple(ordered), tuple(matched), len(gts))


def match_scenes(dets: Mapping[str, Sequence[Detection]], gts: Mapping[str, Sequence[Box3D]],
                 label: str, threshold: float) -> MatchResult:
    """
    Match every scene for one class and merge into a single ranking.

    Matching stays within a scene; the merged list is ordered by descending
    score with scene id as the tie-break.
    """
    rows = []
    n_gt = 0
    for scene_id in sorted(gts):
        scene_gts = [g for g in gts[scene_id] if g.label == label]
        scene_dets = [d for d in dets.get(scene_id, ()) if d.label == label]
        n_gt += len(scene_gts)
        result = match(scene_dets, scene_gts, threshold)
        for rank, (d, g) in enumerate(zip(result.detections, result.matched)):
            rows.append((-d.score, scene_id, rank, d, g))
    rows.sort(key=lambda r: r[:3])
    return MatchResult(
        float(threshold),
        tuple(r[3] for r in rows),
        tuple(r[4] for r in rows),
        n_gt,
    )


def match_all(dets: Mapping[str, Sequence[Detection]], gts: Mapping[str, Sequence[Box3D]],
              labels: Sequence[str], thresholds: Sequence[float]) -> Dict[str, Dict[float, MatchResult]]:
    return {
        label: {t: match_scenes(dets, gts, label, t) for t in thresholds}
        for label in labels
    }
