"""Desk-scale replication of the training-efficiency comparisons: mini-batch
speedup, transfer-learning iteration cuts and the flat-weight instability
observation. Writes a JSON report.

Usage: python scripts/ablation_report.py [out.json] [--budget-scale 0.3]
"""
import argparse
import copy
import json
import sys
import time
from pathlib import Path

from monomotion.evaluation import MetricsConfig, coverage
from monomotion.motion_io import PyramidConfig, to_feature_tensor
from monomotion.network import NetworkConfig, build_model
from monomotion.synthetic import scripted_gait
from monomotion.training import (
    AnnealingSchedule,
    TrainingDiverged,
    normalized_targets,
    preset,
    train_all,
    train_stage,
    transfer_init,
)


def minibatch_speedup(clip, iters=6):
    pyramid = PyramidConfig.for_length(clip.frames)
    net = NetworkConfig(temporal_kernel=3, hidden_per_node=8)

    def wall(batch, n):
        from monomotion.training import TrainConfig

        cfg = TrainConfig(
            batch_size=batch,
            level_iterations=(float(n), 1.0, 1.0, 1.0),
            eval_samples=0,
            network=net,
            pyramid=pyramid,
        )
        model = build_model(clip, pyramid, net, seed=2)
        targets = normalized_targets(model, clip)
        train_stage(model, 0, targets, cfg, iterations=3)
        t0 = time.perf_counter()
        train_stage(model, 0, targets, cfg, iterations=n)
        return time.perf_counter() - t0

    t16 = wall(16, iters)
    t1 = wall(1, 16 * iters)
    return {"wall_b16_s": t16, "wall_b1_s": t1, "speedup": t1 / t16}


def transfer_cut(clip):
    cfg = preset("abl9-smoke")
    cfg.eval_samples = 0
    snapshot = {}

    def on_level(model, level):
        if level == model.pyramid.num_levels - 1:
            snapshot["state"] = copy.deepcopy(model.state_dict())
            snapshot["trained"] = list(model.trained)

    model, _ = train_all(clip, cfg, on_level=on_level)
    targets = normalized_targets(model, clip)
    final_stage = model.pyramid.num_stages - 1

    def arm(transfer):
        model.load_state_dict(copy.deepcopy(snapshot["state"]))
        model.trained = list(snapshot["trained"])
        for p in model.stages[final_stage].parameters():
            p.requires_grad_(True)
        if transfer:
            transfer_init(model, final_stage)
        c = copy.deepcopy(cfg)
        c.stop_lrec = 0.1
        used, lrec = train_stage(model, final_stage, targets, c, iterations=800)
        return used, lrec

    on_iters, on_lrec = arm(True)
    off_iters, off_lrec = arm(False)
    return {
        "iterations_with_transfer": on_iters,
        "iterations_without_transfer": off_iters,
        "reduction": (off_iters - on_iters) / off_iters,
        "final_lrec": {"with": on_lrec, "without": off_lrec},
    }


def flat_weight_observation(clip, budget_scale):
    def run(flat):
        cfg = preset("abl9-smoke")
        cfg.iteration_unit = budget_scale
        cfg.eval_samples = 0
        if flat:
            cfg.annealing = AnnealingSchedule(
                lambda_adv_per_level=(1.0, 1.0, 1.0, 1.0),
                lambda_rec_per_level=(10.0, 10.0, 10.0, 10.0),
            )
        try:
            model, _ = train_all(clip, cfg)
        except TrainingDiverged as exc:
            return {"diverged": True, "detail": str(exc)}
        samples = [model.generate_full(1000 + k) for k in range(32)]
        return {"diverged": False, "coverage": coverage(clip, samples, MetricsConfig())}

    return {"flat": run(True), "annealed": run(False)}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", nargs="?", default="runs/ablation_report.json")
    parser.add_argument("--budget-scale", type=float, default=0.3)
    args = parser.parse_args()

    clip = to_feature_tensor(scripted_gait())
    report = {
        "minibatch": minibatch_speedup(clip),
        "transfer": transfer_cut(clip),
        "flat_weights": flat_weight_observation(clip, args.budget_scale),
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=1))
    print(json.dumps(report, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
