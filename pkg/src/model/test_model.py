"""
Forward pass, losses, checkpoints and training on a tiny configuration.
"""

import dataclasses
import json

import numpy as np
import pytest

from src.cli.run_config import RunConfig
from src.errors import DataError, ManifestError, NumericAbort, NumericError
from src.model.checkpoint import checkpoint_paths, load_checkpoint, read_manifest, save_checkpoint
from src.model.pipeline import FusionModel, build_params, predict
from src.model.training import learning_rate, scene_gradients, train
from src.sim.scene import generate_scene
from src.tensor.params import ParamStore


def _config(**kw):
    base = dict(
        x_range=(-8.0, 8.0), y_range=(-8.0, 8.0), resolution=2.0, channels=8,
        radar_hidden=8, head_hidden=8, refine_hidden=8, layers=1, samples=2, heights=2,
        T=3, M=8, max_proposals=6, refine_proposals=2, refine_jitter=0.1,
        spa_azimuth_deg=20.0, sim_objects=(3, 4), radial_noise=0.0, steps=0,
    )
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def scene():
    return generate_scene(_config().sim_config(), 17)


def _dets(model, scene):
    return [d.to_dict() for d in model.forward_scene(scene)]


# ==================
# structure
# ==================

def test_stage_flags_shape_the_parameters():
    full = FusionModel(_config()).store.names()
    base = FusionModel(_config(rgbq=False, rcg=False, rgpp=False, pra=False)).store.names()
    assert any(n.startswith("radar.") for n in full)
    assert any(n.startswith("refine.") for n in full)
    assert not any(n.startswith(("radar.", "refine.")) or ".rcg." in n for n in base)


def test_rebuilding_from_a_frozen_store_reuses_values():
    model = FusionModel(_config())
    frozen = ParamStore.from_arrays(model.store.arrays())
    params = build_params(model.config, frozen)
    assert params.head.heatmap_mlp.layers[0].weight is frozen["head.heatmap.0.weight"]


# ==================
# forward
# ==================

def test_forward_is_deterministic(scene):
    a = _dets(FusionModel(_config()), scene)
    b = _dets(FusionModel(_config()), scene)
    assert a == b
    assert 0 < len(a) <= 6


def test_untrained_refinement_passes_proposals_through(scene):
    full = _dets(FusionModel(_config()), scene)
    plain = _dets(FusionModel(_config(rgpp=False, pra=False)), scene)
    assert full == plain


def test_camera_only_ignores_radar(scene):
    cfg = _config(rgbq=False, rcg=False, rgpp=False, pra=False)
    silent = dataclasses.replace(scene, sweeps=())
    assert _dets(FusionModel(cfg), scene) == _dets(FusionModel(cfg), silent)


def test_predict_keys_by_scene(scene):
    other = generate_scene(_config().sim_config(), 18)
    out = predict(FusionModel(_config()), [scene, other], workers=2)
    assert list(out) == [scene.scene_id, other.scene_id]


# ==================
# losses
# ==================

def test_scene_loss_terms(scene):
    model = FusionModel(_config())
    inputs = model.prepare(scene)
    total, terms = model.scene_loss(inputs, model.params, 0)
    assert set(terms) == {"heatmap", "regression", "refine"}
    assert np.isfinite(total.item()) and total.item() > 0
    expected = terms["heatmap"].item() + terms["regression"].item() + terms["refine"].item()
    assert total.item() == pytest.approx(expected, rel=1e-12)


def test_refinement_loss_reaches_the_refine_head(scene):
    model = FusionModel(_config())
    values, grads = scene_gradients(model, model.store, model.prepare(scene), 0)
    assert values["refine"] > 0
    assert np.abs(grads["refine.head.1.weight"]).sum() > 0
    assert set(grads) == set(model.store.names())


def test_jitter_depends_on_step(scene):
    model = FusionModel(_config())
    inputs = model.prepare(scene)
    bev = model.bev(inputs)
    a = [p.center for p, _ in model.jittered_proposals(inputs, bev, 0)]
    b = [p.center for p, _ in model.jittered_proposals(inputs, bev, 0)]
    c = [p.center for p, _ in model.jittered_proposals(inputs, bev, 1)]
    assert a == b and a != c


# ==================
# checkpoints
# ==================

def test_checkpoint_round_trip(tmp_path):
    cfg = _config()
    model = FusionModel(cfg)
    manifest_path = save_checkpoint(model.store, cfg, 7, tmp_path / "ckpt" / "model")
    manifest = read_manifest(manifest_path)
    assert manifest["step"] == 7 and manifest["config_hash"] == cfg.config_hash()
    assert [e["name"] for e in manifest["entries"]] == model.store.names()
    loaded = load_checkpoint(tmp_path / "ckpt" / "model.bin", cfg)
    for name, values in model.store.arrays().items():
        assert np.array_equal(loaded[name].data, values)
    assert loaded.frozen


def test_checkpoint_must_match_configuration(tmp_path):
    path = save_checkpoint(FusionModel(_config()).store, _config(), 0, tmp_path / "m")
    with pytest.raises(ManifestError, match="has shape"):
        load_checkpoint(path, _config(head_hidden=4))
    with pytest.raises(ManifestError, match="not part of"):
        load_checkpoint(path, _config(rgpp=False, pra=False))
    with pytest.raises(ManifestError, match="lacks"):
        small = save_checkpoint(FusionModel(_config(rgpp=False, pra=False)).store, _config(), 0, tmp_path / "s")
        load_checkpoint(small, _config())
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "absent", _config())


def test_checkpoint_paths():
    assert checkpoint_paths("runs/m.json") == checkpoint_paths("runs/m")
    assert checkpoint_paths("runs/m")[0].name == "m.bin"


# ==================
# training
# ==================

def test_learning_rate_decays():
    cfg = _config(lr=0.1, lr_decay_step=3, lr_decay_factor=0.5)
    assert [learning_rate(cfg, s) for s in range(5)] == [0.1, 0.1, 0.1, 0.05, 0.05]


def test_zero_steps_keep_initialization(scene):
    cfg = _config(steps=0)
    result = train(cfg, [scene])
    init = FusionModel(cfg).store.arrays()
    assert result.steps == 0
    assert all(np.array_equal(result.store[n].data, v) for n, v in init.items())


def test_training_lowers_the_loss(scene):
    result = train(_config(steps=10), [scene])
    losses = [row["heatmap"] for row in result.trace]
    assert len(losses) == 10
    assert losses[-1] < losses[0]


def test_training_is_reproducible_across_workers(scene):
    other = generate_scene(_config().sim_config(), 23)
    a = train(_config(steps=3), [scene, other], workers=1)
    b = train(_config(steps=3), [scene, other], workers=2)
    assert json.dumps(a.trace) == json.dumps(b.trace)
    assert all(np.array_equal(a.store[n].data, b.store[n].data) for n in a.store.names())


def test_non_finite_loss_aborts_with_step(scene, monkeypatch):
    original = FusionModel.scene_loss

    def failing(self, inputs, params, step):
        if step == 2:
            raise NumericError("nan in heatmap")
        return original(self, inputs, params, step)

    monkeypatch.setattr(FusionModel, "scene_loss", failing)
    with pytest.raises(NumericAbort) as err:
        train(_config(steps=5), [scene])
    assert err.value.step == 2
    assert err.value.exit_code == 4


def test_training_needs_scenes():
    with pytest.raises(DataError):
        train(_config(steps=1), [])


def test_resumed_training_matches_a_continuous_run(scene, tmp_path):
    whole = train(_config(steps=4, lr_decay_step=2), [scene])

    first = train(_config(steps=2, lr_decay_step=2), [scene])
    path = save_checkpoint(first.store, _config(steps=2, lr_decay_step=2), first.steps, tmp_path / "half")
    cfg = _config(steps=4, lr_decay_step=2)
    second = train(cfg, [scene], store=load_checkpoint(path, cfg), start_step=read_manifest(path)["step"])

    assert [row["step"] for row in second.trace] == [2, 3]
    assert second.steps == whole.steps == 4
    assert json.dumps(first.trace + second.trace) == json.dumps(whole.trace)
    assert all(np.array_equal(second.store[n].data, whole.store[n].data) for n in whole.store.names())


def test_resume_past_the_last_step_trains_nothing(scene):
    result = train(_config(steps=2), [scene], start_step=3)
    assert result.trace == [] and result.steps == 3
    with pytest.raises(DataError):
        train(_config(steps=2), [scene], start_step=-1)
