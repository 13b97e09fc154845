"""
The four bench commands. Each takes a validated RunConfig, writes its
artifacts under an output path and returns a CommandResult whose metrics the
CLI records in the run ledger.

    gen    synthetic scenes + manifest.json
    train  checkpoint, loss_trace.json, loss_curve.png
    infer  detections.json
    eval   report.json, report.txt and plots; ablation table for several runs
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from src.cli.run_config import RunConfig
from src.errors import DataError, SchemaError
from src.eval.detections import DetectionSet, read_detection_meta, read_detections, write_detections
from src.eval.metrics import EvalSummary, evaluate
from src.eval.matching import match_all
from src.eval.report import (
    ABLATION_FLAGS,
    AblationRow,
    ablation_rows,
    format_ablation_table,
    format_table,
    plot_bev_scene,
    plot_loss_curve,
    plot_pr_curves,
    plot_tp_errors,
    write_report,
)
from src.model.checkpoint import load_checkpoint, read_manifest, save_checkpoint
from src.model.pipeline import FusionModel, predict
from src.model.training import train, write_trace
from src.sim.scene import SceneRecord, generate_scene
from src.sim.serialize import read_scene, write_scene
from src.utils.parallel import ordered_map
from src.utils.timing import Stopwatch

from config.settings import CLASSES, MATCH_THRESHOLDS, TP_THRESHOLD

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
CHECKPOINT_NAME = "model"
DETECTIONS_NAME = "detections.json"


@dataclass
class CommandResult:
    out_path: Path
    metrics: Dict[str, float] = field(default_factory=dict)


def scene_seed(seed: int, index: int) -> int:
    """Per-scene seed; independent of how many scenes are generated."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


# ==================
# Scenes on disk
# ==================

def load_scenes(scenes_dir: Union[str, Path], workers: int = 1) -> List[SceneRecord]:
    """Scenes listed in a gen manifest, in manifest order."""
    scenes_dir = Path(scenes_dir)
    manifest_path = scenes_dir / MANIFEST_NAME
    if not manifest_path.exists():
        raise DataError(f"no scene manifest in {scenes_dir} (run gen first)")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        entries = manifest["scenes"]
    except (json.JSONDecodeError, KeyError) as e:
        raise SchemaError(f"{manifest_path} is malformed: {e}")
    scenes = ordered_map(lambda e: read_scene(scenes_dir / e["file"]), entries, workers)
    logger.info(f"[cli] loaded {len(scenes)} scenes from {scenes_dir}")
    return scenes


def cmd_gen(config: RunConfig, n_scenes: int, out_dir: Union[str, Path]) -> CommandResult:
    """
    Write n_scenes simulated scenes and a manifest carrying the config hash.

    Scene i uses a seed derived from (config.seed, i), so a larger run starts
    with the same scenes as a smaller one.
    """
    if n_scenes < 0:
        raise DataError(f"n_scenes must be >= 0, got {n_scenes}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim = config.sim_config()

    def build(i: int) -> dict:
        seed = scene_seed(config.seed, i)
        scene = generate_scene(sim, seed, scene_id=f"scene_{i:04d}")
        path = write_scene(scene, out_dir / f"{scene.scene_id}.json")
        return {
            "id": scene.scene_id,
            "file": path.name,
            "seed": seed,
            "boxes": len(scene.gt),
            "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
        }

    with Stopwatch() as watch:
        entries = ordered_map(build, range(n_scenes), config.workers)
    manifest = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "n_scenes": n_scenes,
        "sim": sim.to_dict(),
        "scenes": entries,
    }
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=1), encoding="utf-8")
    logger.info(f"[gen] {n_scenes} scenes -> {out_dir} ({watch})")
    boxes = sum(e["boxes"] for e in entries)
    return CommandResult(manifest_path, {"scenes": float(n_scenes), "boxes": float(boxes)})


# ==================
# Train / infer
# ==================

def cmd_train(config: RunConfig, scenes: Sequence[SceneRecord], out_dir: Union[str, Path],
              resume: Optional[Union[str, Path]] = None) -> CommandResult:
    """
    Train from a fresh initialization (or a checkpoint) and write the results.

    A resumed run continues from the step recorded in the checkpoint manifest
    up to config.steps, and its checkpoint records the absolute step reached.
    """
    out_dir = Path(out_dir)
    store, start_step = None, 0
    if resume:
        store = load_checkpoint(resume, config)
        start_step = int(read_manifest(resume)["step"])
        logger.info(f"[train] resuming {resume} at step {start_step}")
    with Stopwatch() as watch:
        result = train(config, scenes, store=store, workers=config.workers, start_step=start_step)
    manifest_path = save_checkpoint(result.store, config, result.steps, out_dir / CHECKPOINT_NAME)
    write_trace(result.trace, out_dir / "loss_trace.json")
    if result.trace:
        plot_loss_curve(result.trace, out_dir / "loss_curve.png")
    logger.info(f"[train] {len(result.trace)} steps (now at {result.steps}) on {len(scenes)} scenes ({watch})")

    metrics = {"steps": float(result.steps)}
    if result.trace:
        metrics["initial_loss"] = result.trace[0]["loss"]
        metrics["final_loss"] = result.trace[-1]["loss"]
    return CommandResult(manifest_path, metrics)


def cmd_infer(config: RunConfig, checkpoint: Optional[Union[str, Path]], scenes: Sequence[SceneRecord],
              out_path: Union[str, Path]) -> CommandResult:
    """Detections for every scene under the configured stage flags."""
    if checkpoint:
        store = load_checkpoint(checkpoint, config)
    else:
        logger.warning("[infer] no checkpoint given, using the untrained initialization")
        store = None
    model = FusionModel(config, store)
    with Stopwatch() as watch:
        detections = predict(model, scenes, config.workers)
    meta = {
        "config_hash": config.config_hash(),
        "stages": {s: bool(getattr(config, s)) for s in ABLATION_FLAGS},
    }
    path = write_detections(detections, out_path, meta)
    total = sum(len(d) for d in detections.values())
    logger.info(f"[infer] {total} detections over {len(scenes)} scenes ({watch})")
    return CommandResult(path, {"detections": float(total)})


# ==================
# Eval
# ==================

def check_scene_ids(detections: DetectionSet, scenes: Sequence[SceneRecord], source: str) -> None:
    known = {s.scene_id for s in scenes}
    missing = sorted(known - set(detections))
    unknown = sorted(set(detections) - known)
    if missing:
        raise DataError(f"{source} has no detections for scenes: {', '.join(missing)}")
    if unknown:
        raise DataError(f"{source} refers to unknown scenes: {', '.join(unknown)}")


def run_name(path: Union[str, Path]) -> str:
    path = Path(path)
    if path.name == DETECTIONS_NAME and path.parent.name:
        return path.parent.name
    return path.stem


def evaluate_run(detections: DetectionSet, scenes: Sequence[SceneRecord],
                 out_dir: Union[str, Path]) -> EvalSummary:
    """Metrics, report files and plots for one detection set."""
    out_dir = Path(out_dir)
    gts = {s.scene_id: list(s.gt) for s in scenes}
    summary = evaluate(detections, gts, CLASSES, MATCH_THRESHOLDS, TP_THRESHOLD)

    write_report(summary, out_dir / "report.json")
    (out_dir / "report.txt").write_text(format_table(summary) + "\n", encoding="utf-8")
    at_tp = {label: per[TP_THRESHOLD] for label, per in match_all(detections, gts, CLASSES, [TP_THRESHOLD]).items()}
    plot_pr_curves(at_tp, out_dir / "pr_curves.png")
    plot_tp_errors(summary, out_dir / "tp_errors.png")
    if scenes:
        first = scenes[0]
        plot_bev_scene(detections[first.scene_id], first.gt, out_dir / f"bev_{first.scene_id}.png",
                       title=first.scene_id)
    return summary


def cmd_eval(detection_paths: Sequence[Union[str, Path]], scenes: Sequence[SceneRecord],
             out_dir: Union[str, Path]) -> CommandResult:
    """
    Evaluate one or more detection files against the scenes' ground truth.

    A single file writes its report straight into out_dir. Several files each
    get a sub-directory named after the run, plus ablation.json / ablation.txt
    comparing them against the first.
    """
    if not detection_paths:
        raise DataError("eval needs at least one detection file")
    out_dir = Path(out_dir)
    names = [run_name(p) for p in detection_paths]
    if len(detection_paths) > 1 and len(set(names)) < len(names):
        names = [f"{i}_{n}" for i, n in enumerate(names)]

    rows = []
    for name, path in zip(names, detection_paths):
        detections = read_detections(path)
        check_scene_ids(detections, scenes, str(path))
        run_dir = out_dir if len(detection_paths) == 1 else out_dir / name
        summary = evaluate_run(detections, scenes, run_dir)
        flags = read_detection_meta(path).get("stages", {})
        rows.append(AblationRow(name, flags, summary))
        print(f"\n[{name}]")
        print(format_table(summary))

    metrics = {"mAP": rows[0].summary.mean_ap, "NDS": rows[0].summary.nds}
    if len(rows) > 1:
        table = format_ablation_table(rows)
        (out_dir / "ablation.txt").write_text(table + "\n", encoding="utf-8")
        (out_dir / "ablation.json").write_text(
            json.dumps(ablation_rows(rows), sort_keys=True, indent=2), encoding="utf-8"
        )
        print("\n" + table)
        for row in rows[1:]:
            metrics[f"{row.name}.mAP"] = row.summary.mean_ap
            metrics[f"{row.name}.NDS"] = row.summary.nds
    return CommandResult(out_dir, metrics)
