"""
The full fusion model.

    radar points -> pillars -> F_R
    F_R + camera pyramids -> BEV encoder -> head -> proposals -> refinement

Which blocks exist follows the run configuration's stage flags:
    rgbq  query attention reads {Q, F_R} (else {Q})
    rcg   gated fusion (else plain sum); with rgbq also off the radar branch is dropped
    rgpp  instance-level refinement
    pra   proposal-aware attention inside refinement (else uniform weights)
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.bev.cross_attention import SamplingPlan, plan_sampling
from src.bev.encoder import EncoderParams, encode
from src.bev.feature_map import BevFeatureMap
from src.camera.features import CameraFeatures, load_features
from src.cli.run_config import RunConfig
from src.eval.detections import Detection
from src.geometry.boxes import Box3D
from src.geometry.frames import bev_cells
from src.head.proposals import HeadParams, Proposal, head_outputs, propose
from src.head.targets import encode_targets, focal_loss, regression_loss
from src.radar.pillars import RadarEncoderParams, pillarize
from src.radar.points import RadarFilterConfig, RadarPoint, filter_points, points_to_array
from src.refine.refiner import (
    BOX_RESIDUALS,
    RefinementParams,
    RefineOptions,
    proposal_residual,
    refine,
    residual_targets,
)
from src.sim.scene import SceneRecord
from src.tensor import ops
from src.tensor.params import ParamStore
from src.tensor.tensor import Tensor
from src.utils.parallel import ordered_map

from config.settings import CLASSES

logger = logging.getLogger(__name__)

LOSS_TERMS = ("heatmap", "regression", "refine")


@dataclass(frozen=True)
class ModelParams:
    radar: Optional[RadarEncoderParams]
    encoder: EncoderParams
    head: HeadParams
    refine: Optional[RefinementParams]


@dataclass(frozen=True)
class SceneInputs:
    """Everything about a scene the parameters do not touch."""
    scene: SceneRecord
    points: List[RadarPoint]
    raw: np.ndarray
    features: List[CameraFeatures]
    plan: SamplingPlan


def build_params(config: RunConfig, store: ParamStore) -> ModelParams:
    """Ask the store for every parameter the configuration needs."""
    spec = config.spec
    C = spec.channels
    uses_radar = config.rgbq or config.rcg
    radar = None
    if uses_radar:
        radar = RadarEncoderParams.build(
            store, C, config.radar_hidden, config.radar_mlp_layers, config.radar_conv_layers
        )
    encoder = EncoderParams.build(
        store, spec, config.layers, config.samples, config.levels, config.reference_heights,
        mlp0_layers=config.mlp0_layers, ffn_expansion=config.ffn_expansion,
        radar_guided=config.rgbq, gated=config.rcg,
    )
    head = HeadParams.build(store, C, config.head_hidden, len(CLASSES))
    refinement = None
    if config.rgpp:
        refinement = RefinementParams.build(
            store, C, config.refine_hidden, config.T, config.M, config.rho_min, config.rho_max,
            config.setabs_radii, config.pos_enc_freqs,
        )
    return ModelParams(radar, encoder, head, refinement)


class FusionModel:
    """Parameters plus the configuration that shapes them."""

    def __init__(self, config: RunConfig, store: Optional[ParamStore] = None):
        self.config = config
        self.store = store if store is not None else ParamStore(seed=config.seed)
        self.params = build_params(config, self.store)
        self.options = RefineOptions(
            association=config.association(),
            grid_mode=config.grid_mode,
            attend=config.pra,
            fixed_side=config.fixed_side,
        )

    @property
    def spec(self):
        return self.config.spec

    # ==================
    # Forward
    # ==================

    def prepare(self, scene: SceneRecord) -> SceneInputs:
        points = filter_points(scene.radar_points(), RadarFilterConfig(extent=self.spec))
        features = load_features(scene)
        plan = plan_sampling(self.spec, features, self.config.reference_heights)
        return SceneInputs(scene, points, points_to_array(points), features, plan)

    def bev(self, inputs: SceneInputs, params: Optional[ModelParams] = None) -> BevFeatureMap:
        params = params or self.params
        radar = None
        if params.radar is not None:
            radar = BevFeatureMap(pillarize(inputs.points, self.spec, params.radar), self.spec)
        return encode(radar, inputs.features, params.encoder, self.spec, plan=inputs.plan)

    def forward(self, inputs: SceneInputs) -> List[Proposal]:
        bev = self.bev(inputs)
        proposals = propose(bev, self.params.head, self.config.max_proposals)
        if self.params.refine is not None:
            proposals = refine(proposals, inputs.points, inputs.features, self.params.refine, self.options)
        return proposals

    def forward_scene(self, scene: SceneRecord) -> List[Detection]:
        proposals = self.forward(self.prepare(scene))
        logger.debug(f"[model] {scene.scene_id}: {len(proposals)} detections")
        return [Detection.from_proposal(p) for p in proposals]

    # ==================
    # Losses
    # ==================

    def scene_loss(self, inputs: SceneInputs, params: ModelParams, step: int) -> Tuple[Tensor, Dict[str, Tensor]]:
        """
        Weighted sum of the heatmap focal loss, masked L1 box regression and,
        with refinement on, L1 on the residuals of jittered ground-truth proposals.

        Returns:
            (total, {term: scalar tensor})
        """
        cfg = self.config
        bev = self.bev(inputs, params)
        logits, regression = head_outputs(bev, params.head)
        targets = encode_targets(inputs.scene.gt, self.spec, len(CLASSES))
        terms = {
            "heatmap": focal_loss(logits, targets.heatmap),
            "regression": regression_loss(regression, targets),
        }
        total = ops.add(terms["heatmap"], ops.scale(terms["regression"], cfg.reg_weight))
        if params.refine is not None:
            terms["refine"] = self.refinement_loss(inputs, bev, params.refine, step)
            total = ops.add(total, ops.scale(terms["refine"], cfg.refine_weight))
        return total, terms

    def jittered_proposals(self, inputs: SceneInputs, bev: BevFeatureMap, step: int) -> List[Tuple[Proposal, Box3D]]:
        """Ground-truth boxes moved by Gaussian center noise, paired with their box."""
        cfg = self.config
        gt = list(inputs.scene.gt)
        if not gt or cfg.refine_proposals == 0:
            return []
        rng = np.random.default_rng([cfg.seed, inputs.scene.seed, step])
        chosen = sorted(rng.permutation(len(gt))[:cfg.refine_proposals])
        spec = self.spec
        flat = ops.reshape(bev.values, (spec.rows * spec.cols, spec.channels))
        out = []
        for i in chosen:
            box = gt[i]
            offset = rng.normal(0.0, cfg.refine_jitter, 2)
            center = (box.center[0] + offset[0], box.center[1] + offset[1], box.center[2])
            rows, cols, _ = bev_cells(np.array([center[:2]]), spec)
            row = int(np.clip(rows[0], 0, spec.rows - 1))
            col = int(np.clip(cols[0], 0, spec.cols - 1))
            latent = ops.reshape(ops.take(flat, [row * spec.cols + col], axis=0), (spec.channels,))
            proposal = Proposal(
                tuple(float(v) for v in center), box.size, box.yaw, box.velocity, 0.5, box.class_id, latent
            )
            out.append((proposal, box))
        return out

    def refinement_loss(self, inputs: SceneInputs, bev: BevFeatureMap,
                        params: RefinementParams, step: int) -> Tensor:
        """Mean L1 between predicted and ideal box residuals; zero when nothing is refined."""
        losses = []
        for proposal, box in self.jittered_proposals(inputs, bev, step):
            residual = proposal_residual(proposal, inputs.raw, inputs.features, params, self.options)
            if residual is None:
                continue
            predicted = ops.take(residual, list(range(BOX_RESIDUALS)), axis=0)
            diff = ops.abs(ops.sub(predicted, residual_targets(proposal, box)))
            losses.append(ops.mean(diff))
        if not losses:
            return Tensor(0.0)
        return ops.scale(ops.sum(ops.concat([ops.reshape(l, (1,)) for l in losses], axis=0)), 1.0 / len(losses))


def predict(model: FusionModel, scenes: Sequence[SceneRecord], workers: int = 1) -> Dict[str, List[Detection]]:
    results = ordered_map(model.forward_scene, scenes, workers)
    return {scene.scene_id: dets for scene, dets in zip(scenes, results)}
