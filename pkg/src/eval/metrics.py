"""
Average precision, true-positive errors and the composite detection score.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from src.eval.detections import Detection
from src.eval.matching import MatchResult, match_all
from src.geometry.boxes import Box3D
from src.geometry.frames import wrap_angle

from config.settings import CLASSES, MAP_WEIGHT, MATCH_THRESHOLDS, MIN_PRECISION, MIN_RECALL, TP_THRESHOLD

logger = logging.getLogger(__name__)

RECALL_POINTS = 101
TP_METRICS = ("ate", "ase", "aoe", "ave")


def interpolated_precision(result: MatchResult) -> np.ndarray:
    """Precision sampled at 101 evenly spaced recall values; zero beyond the reached recall."""
    precision, recall = result.precision_recall()
    grid = np.linspace(0.0, 1.0, RECALL_POINTS)
    if len(precision) == 0 or result.n_gt == 0:
        return np.zeros(RECALL_POINTS)
    return np.interp(grid, recall, precision, right=0.0)


def average_precision(result: MatchResult, min_recall: float = MIN_RECALL,
                      min_precision: float = MIN_PRECISION) -> float:
    """
    Area under the interpolated precision-recall curve.

    Recall points up to min_recall are dropped and precision is floored at
    min_precision, then rescaled so a perfect detector scores 1.
    """
    prec = interpolated_precision(result)[int(round(100 * min_recall)) + 1:]
    prec = np.clip((prec - min_precision) / (1.0 - min_precision), 0.0, None)
    return float(prec.mean())


def scale_error(det: Box3D, gt: Box3D) -> float:
    """1 - IoU of the two boxes after aligning centers and headings."""
    a, b = np.array(det.size), np.array(gt.size)
    inter = np.prod(np.minimum(a, b))
    return float(1.0 - inter / (np.prod(a) + np.prod(b) - inter))


def orientation_error(det: Box3D, gt: Box3D) -> float:
    return abs(wrap_angle(det.yaw - gt.yaw))


def velocity_error(det: Box3D, gt: Box3D) -> float:
    return float(np.hypot(det.velocity[0] - gt.velocity[0], det.velocity[1] - gt.velocity[1]))


def translation_error(det: Box3D, gt: Box3D) -> float:
    return float(np.hypot(det.center[0] - gt.center[0], det.center[1] - gt.center[1]))


ERROR_FUNCS = {
    "ate": translation_error,
    "ase": scale_error,
    "aoe": orientation_error,
    "ave": velocity_error,
}


def tp_errors(result: MatchResult) -> Optional[Dict[str, float]]:
    """Mean errors over the true positives; None when there are none."""
    pairs = result.pairs()
    if not pairs:
        return None
    return {
        name: float(np.mean([fn(d.box, g) for d, g in pairs]))
        for name, fn in ERROR_FUNCS.items()
    }


def nds(mean_ap: float, errors: Mapping[str, float], map_weight: float = MAP_WEIGHT) -> float:
    """(w * mAP + sum(1 - min(1, e))) / (w + number of error terms)."""
    total = map_weight * mean_ap + sum(1.0 - min(1.0, e) for e in errors.values())
    return float(total / (map_weight + len(errors)))


@dataclass
class EvalSummary:
    ap: Dict[str, Dict[float, float]]             # class -> threshold -> AP
    class_errors: Dict[str, Dict[str, float]]     # class -> metric -> mean, classes with TPs only
    mean_ap: float
    errors: Dict[str, float]
    nds: float
    counts: Dict[str, Dict[str, int]] = field(default_factory=dict)   # class -> gt / det / tp

    def to_dict(self) -> dict:
        return {
            "ap": {c: {str(t): v for t, v in per.items()} for c, per in self.ap.items()},
            "class_errors": self.class_errors,
            "mAP": self.mean_ap,
            "errors": self.errors,
            "NDS": self.nds,
            "counts": self.counts,
        }


def evaluate(dets: Mapping[str, Sequence[Detection]], gts: Mapping[str, Sequence[Box3D]],
             classes: Sequence[str] = CLASSES, thresholds: Sequence[float] = MATCH_THRESHOLDS,
             tp_threshold: float = TP_THRESHOLD) -> EvalSummary:
    """
    Full metric pipeline over a set of scenes.

    mAP averages classes with at least one ground-truth box over every
    threshold. TP errors come from matching at tp_threshold and are averaged
    over the classes that have true positives; with none anywhere each error
    is 1.0.
    """
    all_thresholds = sorted(set(thresholds) | {tp_threshold})
    results = match_all(dets, gts, classes, all_thresholds)

    ap, class_errors, counts = {}, {}, {}
    for label in classes:
        per = results[label]
        ap[label] = {t: average_precision(per[t]) for t in thresholds}
        errs = tp_errors(per[tp_threshold])
        if errs is not None:
            class_errors[label] = errs
        counts[label] = {
            "gt": per[tp_threshold].n_gt,
            "det": len(per[tp_threshold].detections),
            "tp": int(per[tp_threshold].tp.sum()),
        }

    present = [c for c in classes if counts[c]["gt"] > 0]
    mean_ap = float(np.mean([np.mean(list(ap[c].values())) for c in present])) if present else 0.0
    if class_errors:
        errors = {m: float(np.mean([e[m] for e in class_errors.values()])) for m in TP_METRICS}
    else:
        errors = {m: 1.0 for m in TP_METRICS}
    score = nds(mean_ap, errors)
    logger.info(f"[eval] mAP={mean_ap:.4f} NDS={score:.4f} over {len(gts)} scenes")
    return EvalSummary(ap, class_errors, mean_ap, errors, score, counts)
