"""
Fixed-step full-batch gradient descent.

Each step evaluates every scene's loss on its own gradient tape (scenes may
run on worker threads), averages the gradients in scene order, and moves the
parameters. A non-finite loss or gradient stops training with the step number.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.cli.run_config import RunConfig
from src.errors import DataError, NumericAbort, NumericError
from src.model.pipeline import LOSS_TERMS, FusionModel, SceneInputs, build_params
from src.sim.scene import SceneRecord
from src.tensor.params import ParamStore
from src.tensor.tensor import GradTape, backward
from src.utils.parallel import ordered_map

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    store: ParamStore
    trace: List[Dict[str, float]] = field(default_factory=list)
    start_step: int = 0

    @property
    def steps(self) -> int:
        """Absolute step count reached, including steps taken before a resume."""
        return self.start_step + len(self.trace)


def learning_rate(config: RunConfig, step: int) -> float:
    if step >= config.lr_decay_step:
        return config.lr * config.lr_decay_factor
    return config.lr


def scene_gradients(model: FusionModel, store: ParamStore, inputs: SceneInputs,
                    step: int) -> Tuple[Dict[str, float], Dict[str, np.ndarray]]:
    """(loss terms, gradients by name) of one scene at the given parameters."""
    with GradTape() as tape:
        tracked = store.track(tape)
        params = build_params(model.config, tracked)
        total, terms = model.scene_loss(inputs, params, step)
    grads = tracked.grads_by_name(backward(tape, total))
    values = {"loss": total.item(), **{k: v.item() for k, v in terms.items()}}
    return values, grads


def train(config: RunConfig, scenes: Sequence[SceneRecord], store: Optional[ParamStore] = None,
          workers: int = 1, start_step: int = 0) -> TrainResult:
    """
    Args:
        config: Run configuration (steps, lr schedule, loss weights, stages)
        scenes: Training scenes, at least one
        store: Starting parameters; a fresh seeded initialization by default
        workers: Threads for per-scene loss evaluation
        start_step: Steps already taken by `store`; the lr schedule, jitter draws
            and trace rows continue from here

    Returns:
        Final parameters and the per-step loss trace
    """
    if not scenes:
        raise DataError("training needs at least one scene")
    if start_step < 0:
        raise DataError(f"start_step must be >= 0, got {start_step}")
    if start_step >= config.steps and config.steps > 0:
        logger.warning(f"[train] already at step {start_step} of {config.steps}, nothing to do")
    model = FusionModel(config, store)
    store = model.store
    inputs = [model.prepare(scene) for scene in scenes]
    trace = []
    n = len(inputs)

    for step in range(start_step, config.steps):
        try:
            results = ordered_map(lambda x: scene_gradients(model, store, x, step), inputs, workers)
        except NumericError as e:
            raise NumericAbort(step, str(e))

        row = {"step": step}
        for key in ("loss",) + LOSS_TERMS:
            if key in results[0][0]:
                row[key] = sum(r[0][key] for r in results) / n
        if not np.isfinite(row["loss"]):
            raise NumericAbort(step)

        grads = {}
        for name in store.names():
            g = sum(r[1][name] for r in results) / n
            if not np.isfinite(g).all():
                raise NumericAbort(step, f"gradient of '{name}'")
            grads[name] = g

        store = store.stepped(grads, learning_rate(config, step))
        trace.append(row)
        logger.info(f"[train] step {step + 1}/{config.steps} loss={row['loss']:.6f}")

    return TrainResult(store, trace, start_step)


def write_trace(trace: Sequence[Dict[str, float]], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(list(trace), sort_keys=True, indent=1), encoding="utf-8")
    return path
