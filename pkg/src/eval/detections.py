"""
Scored detections and the per-scene detection file.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from src.errors import DataError, SchemaError
from src.geometry.boxes import Box3D

logger = logging.getLogger(__name__)

DetectionSet = Dict[str, List["Detection"]]   # scene id -> detections


@dataclass(frozen=True)
class Detection:
    box: Box3D
    score: float

    def __post_init__(self):
        object.__setattr__(self, "score", float(self.score))
        if not 0.0 <= self.score <= 1.0:
            raise SchemaError(f"detection score {self.score} outside [0, 1]")

    @property
    def label(self) -> str:
        return self.box.label

    def sort_key(self) -> tuple:
        """Descending score, then a canonical order over the box fields."""
        b = self.box
        return (-self.score, b.class_id, b.center, b.size, b.yaw, b.velocity)

    def to_dict(self) -> dict:
        d = self.box.to_dict()
        d["score"] = self.score
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "Detection":
        try:
            return cls(Box3D.from_dict(data), float(data["score"]))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, SchemaError):
                raise
            raise SchemaError(f"malformed detection: {e}")

    @classmethod
    def from_proposal(cls, proposal) -> "Detection":
        return cls(proposal.box, proposal.score)


def ground_truth_as_detections(gt: Sequence[Box3D], score: float = 1.0) -> List[Detection]:
    return [Detection(box, score) for box in gt]


def dumps_detections(detections: DetectionSet, meta: Optional[dict] = None) -> bytes:
    """Canonical detection file; meta (producing config hash, stages) rides along untouched."""
    payload = {
        "scenes": {
            scene_id: [d.to_dict() for d in sorted(dets, key=Detection.sort_key)]
            for scene_id, dets in detections.items()
        }
    }
    if meta:
        payload["meta"] = meta
    return json.dumps(payload, sort_keys=True, indent=1).encode("utf-8")


def write_detections(detections: DetectionSet, path: Union[str, Path], meta: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_detections(detections, meta))
    total = sum(len(d) for d in detections.values())
    logger.info(f"[eval] wrote {total} detections for {len(detections)} scenes -> {path}")
    return path


def _load(path: Union[str, Path]) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"detection file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path} is not valid JSON: {e}")
    if not isinstance(data, dict) or not isinstance(data.get("scenes"), dict):
        raise SchemaError(f"{path} has no 'scenes' object")
    return data


def read_detections(path: Union[str, Path]) -> DetectionSet:
    data = _load(path)
    return {
        scene_id: [Detection.from_dict(d) for d in dets]
        for scene_id, dets in data["scenes"].items()
    }


def read_detection_meta(path: Union[str, Path]) -> dict:
    meta = _load(path).get("meta", {})
    if not isinstance(meta, dict):
        raise SchemaError(f"{path} has a malformed 'meta' entry")
    return meta
