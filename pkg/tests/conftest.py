import copy
import os
from dataclasses import dataclass

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from monomotion.motion_io import MotionTensor, PyramidConfig, to_feature_tensor
from monomotion.network import NetworkConfig, PyramidModel
from monomotion.synthetic import scripted_gait
from monomotion.training import AnnealingSchedule, TrainConfig, preset, train_all

settings.register_profile(
    "ci",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")

torch.set_num_threads(max(1, os.cpu_count() or 1))


@pytest.fixture(scope="session")
def gait_tensor() -> MotionTensor:
    return to_feature_tensor(scripted_gait())


@dataclass
class SmokeRun:
    """The shared A3 training artifact: model + report + inputs, plus the
    model state captured right before the final level (for the transfer
    experiment) and the final state (to restore afterwards)."""

    model: PyramidModel
    report: object
    clip: MotionTensor
    cfg: TrainConfig
    pre_final_state: dict
    pre_final_trained: list
    final_state: dict


@pytest.fixture(scope="session")
def smoke_run(gait_tensor) -> SmokeRun:
    cfg = preset("abl9-smoke")
    cfg.eval_samples = 0
    snapshot = {}

    def on_level(model, level):
        if level == model.pyramid.num_levels - 1:
            snapshot["state"] = copy.deepcopy(model.state_dict())
            snapshot["trained"] = list(model.trained)

    model, report = train_all(gait_tensor, cfg, on_level=on_level)
    return SmokeRun(
        model=model,
        report=report,
        clip=gait_tensor,
        cfg=cfg,
        pre_final_state=snapshot["state"],
        pre_final_trained=snapshot["trained"],
        final_state=copy.deepcopy(model.state_dict()),
    )


@pytest.fixture(scope="session")
def tiny_run():
    """A very small trained model for contract tests that only need trained
    stages, not quality: 4 stages over a 64-frame clip, a few iterations."""
    clip = to_feature_tensor(scripted_gait(frames=64, period=16, seed=3))
    cfg = TrainConfig(
        batch_size=4,
        level_iterations=(30.0, 20.0),
        seed=11,
        eval_samples=0,
        network=NetworkConfig(temporal_kernel=3, hidden_per_node=8),
        pyramid=PyramidConfig.for_length(
            64, num_stages=4, level_grouping=(2, 2), coarsest_fraction=0.35
        ),
        annealing=AnnealingSchedule(
            lambda_adv_per_level=(5.0, 1.0), lambda_rec_per_level=(50.0, 100.0)
        ),
    )
    model, report = train_all(clip, cfg)
    return model, report, clip, cfg
