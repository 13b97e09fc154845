"""
Checkpoints: <name>.bin holds every parameter as little-endian fp64, back to
back; <name>.json lists {name, shape, offset} per entry (offset in values),
the config hash and the training step.
"""

import json
import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from src.cli.run_config import RunConfig
from src.errors import DataError, ManifestError, SchemaError
from src.model.pipeline import FusionModel
from src.tensor.params import ParamStore

logger = logging.getLogger(__name__)


def checkpoint_paths(path: Union[str, Path]) -> Tuple[Path, Path]:
    """(binary, manifest) for a base path with or without an extension."""
    base = Path(path)
    if base.suffix in (".bin", ".json"):
        base = base.with_suffix("")
    return base.with_name(base.name + ".bin"), base.with_name(base.name + ".json")


def save_checkpoint(store: ParamStore, config: RunConfig, step: int, path: Union[str, Path]) -> Path:
    bin_path, json_path = checkpoint_paths(path)
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, values in store.arrays().items():
        entries.append({"name": name, "shape": list(values.shape), "offset": offset})
        chunks.append(np.ascontiguousarray(values, dtype="<f8").reshape(-1))
        offset += values.size
    blob = np.concatenate(chunks) if chunks else np.zeros(0, dtype="<f8")
    bin_path.write_bytes(blob.astype("<f8").tobytes())
    manifest = {"entries": entries, "config_hash": config.config_hash(), "step": int(step), "total": offset}
    json_path.write_text(json.dumps(manifest, sort_keys=True, indent=1), encoding="utf-8")
    logger.info(f"[checkpoint] saved {len(entries)} tensors ({offset} values) -> {json_path}")
    return json_path


def read_manifest(path: Union[str, Path]) -> dict:
    _, json_path = checkpoint_paths(path)
    if not json_path.exists():
        raise DataError(f"checkpoint manifest not found: {json_path}")
    try:
        manifest = json.loads(json_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{json_path} is not valid JSON: {e}")
    for key in ("entries", "config_hash", "step"):
        if key not in manifest:
            raise SchemaError(f"checkpoint manifest {json_path} is missing '{key}'")
    return manifest


def load_checkpoint(path: Union[str, Path], config: RunConfig) -> ParamStore:
    """
    Frozen store with the checkpoint's values.

    Every entry must match the structure the configuration builds: missing,
    extra or reshaped entries raise ManifestError naming the entry.
    """
    bin_path, json_path = checkpoint_paths(path)
    manifest = read_manifest(path)
    if not bin_path.exists():
        raise DataError(f"checkpoint values not found: {bin_path}")
    values = np.frombuffer(bin_path.read_bytes(), dtype="<f8")

    expected = {name: arr.shape for name, arr in FusionModel(config).store.arrays().items()}
    found = {}
    for entry in manifest["entries"]:
        name, shape, offset = entry["name"], tuple(entry["shape"]), int(entry["offset"])
        if name not in expected:
            raise ManifestError(f"checkpoint entry '{name}' is not part of the configured model")
        if shape != expected[name]:
            raise ManifestError(f"checkpoint entry '{name}' has shape {shape}, configuration needs {expected[name]}")
        size = int(np.prod(shape)) if shape else 1
        if offset < 0 or offset + size > len(values):
            raise SchemaError(f"checkpoint entry '{name}' runs past the end of {bin_path}")
        found[name] = values[offset:offset + size].astype(np.float64).reshape(shape)
    missing = [name for name in expected if name not in found]
    if missing:
        raise ManifestError(f"checkpoint lacks entry '{missing[0]}'" + (f" (+{len(missing) - 1} more)" if len(missing) > 1 else ""))
    if manifest["config_hash"] != config.config_hash():
        logger.warning(f"[checkpoint] {json_path} was written under a different configuration hash")
    logger.info(f"[checkpoint] loaded {len(found)} tensors from step {manifest['step']}")
    return ParamStore.from_arrays({name: found[name] for name in expected})
