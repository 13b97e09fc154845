"""
Scene files: one JSON document per scene.

Feature rasters are stored as base64 little-endian float32 with their shape,
everything else as plain JSON. Keys are sorted so equal scenes give equal bytes.
"""

import base64
import json
import logging
from pathlib import Path
from typing import Union

import numpy as np

from src.errors import DataError, SchemaError
from src.geometry.boxes import Box3D
from src.geometry.camera import CameraModel
from src.radar.points import RadarSweep
from src.sim.scene import SceneRecord

logger = logging.getLogger(__name__)

SCENE_KEYS = ("scene_id", "gt", "sweeps", "cameras", "features", "seed")


def encode_array(array: np.ndarray) -> dict:
    a = np.ascontiguousarray(array, dtype="<f4")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(blob: dict) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in blob["shape"])
        raw = base64.b64decode(blob["data"], validate=True)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"malformed feature blob: {e}")


def scene_to_dict(scene: SceneRecord) -> dict:
    return {
        "scene_id": scene.scene_id,
        "seed": scene.seed,
        "gt": [b.to_dict() for b in scene.gt],
        "sweeps": [s.to_dict() for s in scene.sweeps],
        "cameras": [c.to_dict() for c in scene.cameras],
        "features": [[encode_array(f) for f in levels] for levels in scene.features],
    }


def scene_from_dict(data: dict) -> SceneRecord:
    if not isinstance(data, dict):
        raise SchemaError("scene document must be a JSON object")
    missing = [k for k in SCENE_KEYS if k not in data]
    if missing:
        raise SchemaError(f"scene is missing keys: {', '.join(missing)}")
    try:
        return SceneRecord(
            scene_id=str(data["scene_id"]),
            gt=tuple(Box3D.from_dict(b) for b in data["gt"]),
            sweeps=tuple(RadarSweep.from_dict(s) for s in data["sweeps"]),
            cameras=tuple(CameraModel.from_dict(c) for c in data["cameras"]),
            features=tuple(tuple(decode_array(f) for f in levels) for levels in data["features"]),
            seed=int(data["seed"]),
        )
    except TypeError as e:
        raise SchemaError(f"malformed scene '{data.get('scene_id')}': {e}")


def dumps_scene(scene: SceneRecord) -> bytes:
    return json.dumps(scene_to_dict(scene), sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_scene(scene: SceneRecord, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_scene(scene))
    logger.debug(f"[sim] wrote {scene.scene_id} -> {path}")
    return path


def read_scene(path: Union[str, Path]) -> SceneRecord:
    path = Path(path)
    if not path.exists():
        raise DataError(f"scene file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path} is not valid JSON: {e}")
    return scene_from_dict(data)
