"""
Stage ablation trend on the desk grid: each stage set is trained per seed on
the same scenes and scored on held-out scenes.

Runs only with --run-slow.
"""

from pathlib import Path

import numpy as np
import pytest

from src.cli.commands import scene_seed
from src.cli.run_config import RunConfig
from src.eval.metrics import evaluate
from src.model.pipeline import FusionModel, predict
from src.model.training import train
from src.sim.scene import generate_scene

pytestmark = pytest.mark.slow

DESK_CONFIG = Path(__file__).resolve().parents[2] / "config" / "desk_ablation.json"
MODEL_SEEDS = (0, 1, 2)
TRAIN_SCENES = 40
VAL_SCENES = 200
VAL_SEED = 1

STAGE_SETS = {
    "base": (),
    "rgbq": ("rgbq",),
    "rcg": ("rgbq", "rcg"),
    "rgpp": ("rgbq", "rcg", "rgpp"),
    "full": ("rgbq", "rcg", "rgpp", "pra"),
}


def _scenes(config, seed, n):
    sim = config.sim_config()
    return [generate_scene(sim, scene_seed(seed, i), scene_id=f"scene_{i:04d}") for i in range(n)]


@pytest.fixture(scope="module")
def summaries():
    """name -> (mean mAP, mean ATE) over the model seeds."""
    desk = RunConfig.load(str(DESK_CONFIG))
    train_scenes = _scenes(desk, desk.seed, TRAIN_SCENES)
    val_scenes = _scenes(desk, VAL_SEED, VAL_SCENES)
    gts = {s.scene_id: list(s.gt) for s in val_scenes}

    out = {}
    for name, stages in STAGE_SETS.items():
        maps, ates = [], []
        for seed in MODEL_SEEDS:
            cfg = desk.replace(seed=seed).with_stages(stages)
            result = train(cfg, train_scenes, workers=cfg.workers)
            dets = predict(FusionModel(cfg, result.store), val_scenes, cfg.workers)
            summary = evaluate(dets, gts)
            maps.append(summary.mean_ap)
            ates.append(summary.errors["ate"])
        out[name] = (float(np.mean(maps)), float(np.mean(ates)))
    return out


def test_map_improves_with_each_stage(summaries):
    assert summaries["full"][0] >= summaries["rgpp"][0] >= summaries["rcg"][0]
    assert summaries["rgbq"][0] >= summaries["base"][0] + 0.02


def test_refinement_cuts_translation_error(summaries):
    assert summaries["full"][1] <= 0.9 * summaries["rcg"][1]
